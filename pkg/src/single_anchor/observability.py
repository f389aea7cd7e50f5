"""Observability rank test for the single-anchor unicycle model.

Outputs are the squared-range map ``(x**2 + y**2) / 2`` (anchor at origin),
heading, and optionally speed and yaw rate. The gradients of the non-constant
zeroth and first order Lie derivatives along the drift field give

    [ x          y          0                        0                    0 ]
    [ v cos(th)  v sin(th)  -x v sin(th) + y v cos(th)  x cos(th) + y sin(th)  0 ]
    [ 0          0          1                        0                    0 ]
    [ 0          0          0                        1                    0 ]
    [ 0          0          0                        0                    1 ]

The last two rows come from the speed and yaw-rate outputs; dropping them
models a robot without velocity sensing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import InvalidArgumentError, RobotState

RANK_TOL = 1e-10


@dataclass
class ObservabilityReport:
    matrix: np.ndarray
    rank: int
    singular_values: np.ndarray
    conditions: dict[str, bool] = field(default_factory=dict)

    @property
    def observable(self) -> bool:
        return self.rank == 5

    def to_json(self) -> dict:
        return {
            "matrix": [[float(v) for v in row] for row in self.matrix],
            "rank": int(self.rank),
            "singular_values": [float(s) for s in self.singular_values],
            "conditions": {k: bool(v) for k, v in self.conditions.items()},
            "observable": bool(self.observable),
        }


def observability_matrix(state: RobotState, include_velocity_rows: bool = True) -> np.ndarray:
    x, y, th, v = state.x, state.y, state.theta, state.v
    if x == 0.0 and y == 0.0:
        raise InvalidArgumentError("state coincides with the anchor at the origin")
    c, s = math.cos(th), math.sin(th)
    dG = np.zeros((5, 5))
    dG[0, :2] = x, y
    dG[1, :4] = v * c, v * s, -x * v * s + y * v * c, x * c + y * s
    dG[2, 2] = 1.0
    if include_velocity_rows:
        dG[3, 3] = 1.0
        dG[4, 4] = 1.0
    return dG


def numerical_rank(matrix: np.ndarray, tol: float = RANK_TOL) -> int:
    """Count singular values above ``tol`` times the largest one."""
    sv = np.linalg.svd(np.asarray(matrix, dtype=float), compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > tol * sv[0]))


def is_observable(state: RobotState, include_velocity_rows: bool = True,
                  tol: float = RANK_TOL) -> tuple[bool, ObservabilityReport]:
    dG = observability_matrix(state, include_velocity_rows)
    sv = np.linalg.svd(dG, compute_uv=False)
    rank = int(np.sum(sv > tol * sv[0])) if sv[0] > 0 else 0
    # y/x != tan(theta) written without the division: heading not along the ray
    cross = state.x * math.sin(state.theta) - state.y * math.cos(state.theta)
    scale = math.hypot(state.x, state.y)
    report = ObservabilityReport(
        matrix=dG,
        rank=rank,
        singular_values=sv,
        conditions={
            "v_nonzero": state.v != 0.0,
            "not_radial_line": bool(abs(cross) > tol * scale),
            "velocity_measured": include_velocity_rows,
        },
    )
    return rank == 5, report
