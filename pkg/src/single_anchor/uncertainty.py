"""First-order error propagation for the three-range speed solve.

For uniform sampling ``v = sqrt(D / (2 dt**2))`` with
``D = r2**2 + r0**2 - 2 r1**2``. Propagating independent range errors of
standard deviation ``sigma_r`` through the partial derivatives gives

    var_v = (r0**2 + r2**2 + 4 r1**2) / (2 D) * (sigma_r / dt)**2
          = (1/2 + 3 r1**2 / D) * (sigma_r / dt)**2

The Monte Carlo routine below re-solves perturbed triples and is the check
on this linearisation.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .core import ConditioningError, EstimationError, InvalidArgumentError


class OracleDegenerateError(EstimationError, ArithmeticError):
    """Every Monte Carlo trial failed to produce a real speed."""


class SpeedVariance(NamedTuple):
    var_v: float
    denom: float


class MonteCarloResult(NamedTuple):
    std: float
    mean: float
    discard_fraction: float
    n_ok: int


def speed_variance_analytic(r0: float, r1: float, r2: float, dt: float,
                            sigma_r: float) -> SpeedVariance:
    if not dt > 0:
        raise InvalidArgumentError("dt must be > 0")
    if not sigma_r >= 0:
        raise InvalidArgumentError("sigma_r must be >= 0")
    d = r2 * r2 + r0 * r0 - 2.0 * r1 * r1
    if not d > 0:
        raise ConditioningError("speed solve is ill-conditioned", d)
    coeff = (r0 * r0 + r2 * r2 + 4.0 * r1 * r1) / (2.0 * d)
    return SpeedVariance(coeff * (sigma_r / dt) ** 2, d)


def speed_variance_general(r0: float, r1: float, r2: float, dt1: float, dt2: float,
                           sigma_r: float) -> float:
    """Propagated variance for unequal intervals; ``inf`` when v**2 <= 0.

    With ``k = dt2/dt1`` and ``N = (r2**2 - r1**2) - k (r1**2 - r0**2)``,
    ``v**2 = N / (dt2 (dt1 + dt2))`` and
    ``var_v = sigma_r**2 * |grad N|**2 / (4 N dt2 (dt1 + dt2))``.
    """
    k = dt2 / dt1
    a, b, c = r0 * r0, r1 * r1, r2 * r2
    n = (c - b) - k * (b - a)
    if not n > 0:
        return math.inf
    grad_sq = 4.0 * (k * k * a + (1.0 + k) ** 2 * b + c)
    return sigma_r * sigma_r * grad_sq / (4.0 * n * dt2 * (dt1 + dt2))


def speed_std_monte_carlo(r0: float, r1: float, r2: float, dt: float, sigma_r: float,
                          n_trials: int = 100_000, seed: int = 0) -> MonteCarloResult:
    """Empirical spread of the uniform-interval speed under Gaussian range noise.

    Trials whose perturbed triple has a negative discriminant are discarded and
    reported through ``discard_fraction``.
    """
    if n_trials < 10_000:
        raise InvalidArgumentError("n_trials must be >= 1e4")
    if not dt > 0 or not sigma_r >= 0:
        raise InvalidArgumentError("dt must be > 0 and sigma_r >= 0")
    rng = np.random.default_rng(seed)
    ranges = np.array([r0, r1, r2], dtype=float) + rng.normal(0.0, sigma_r, (n_trials, 3))
    d = ranges[:, 2] ** 2 + ranges[:, 0] ** 2 - 2.0 * ranges[:, 1] ** 2
    ok = d >= 0.0
    n_ok = int(ok.sum())
    if n_ok == 0:
        raise OracleDegenerateError("all Monte Carlo trials produced negative discriminants")
    v = np.sqrt(d[ok] / (2.0 * dt * dt))
    return MonteCarloResult(
        std=float(v.std(ddof=1)) if n_ok > 1 else 0.0,
        mean=float(v.mean()),
        discard_fraction=1.0 - n_ok / n_trials,
        n_ok=n_ok,
    )
