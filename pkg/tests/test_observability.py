import math

import numpy as np
import pytest

from single_anchor.core import InvalidArgumentError, RobotState
from single_anchor.observability import (
    RANK_TOL,
    is_observable,
    numerical_rank,
    observability_matrix,
)


def generic_states(rng, n):
    """Random states away from the anchor, v = 0 and the radial line."""
    out = []
    while len(out) < n:
        x, y = rng.uniform(-50, 50, 2)
        th, v, w = rng.uniform(-math.pi, math.pi), rng.uniform(0.2, 10), rng.uniform(-1, 1)
        if min(abs(x), abs(y)) < 0.1:
            continue
        # |sin| of the angle between heading and the anchor ray
        if abs(x * math.sin(th) - y * math.cos(th)) / math.hypot(x, y) < 0.05:
            continue
        out.append(RobotState(x, y, th, v, w))
    return out


def hand_rank(M, tol=RANK_TOL):
    # independent oracle: Gram matrix eigenvalues are squared singular values
    ev = np.sort(np.abs(np.linalg.eigvalsh(M.T @ M)))[::-1]
    return int(np.sum(np.sqrt(ev) > tol * np.sqrt(ev[0]) * (1 + 1e-6)))


class TestMatrix:
    def test_tangential_example(self):
        M = observability_matrix(RobotState(10, 0, math.pi / 2, 1, 0), True)
        expected = [[10, 0, 0, 0, 0], [0, 1, -10, 0, 0], [0, 0, 1, 0, 0],
                    [0, 0, 0, 1, 0], [0, 0, 0, 0, 1]]
        assert M == pytest.approx(np.array(expected, dtype=float), abs=1e-12)

    def test_radial_example(self):
        M = observability_matrix(RobotState(10, 0, 0, 1, 0), True)
        assert M[1] == pytest.approx([1, 0, 0, 10, 0])

    @pytest.mark.parametrize("x,y,th", [(3, 4, 0.3), (-7, 2, 2.0), (1, -1, -1.0)])
    def test_zero_speed_row(self, x, y, th):
        M = observability_matrix(RobotState(x, y, th, 0.0, 0.0), True)
        assert M[1] == pytest.approx([0, 0, 0, x * math.cos(th) + y * math.sin(th), 0])

    def test_no_velocity_rows_are_zero(self):
        M = observability_matrix(RobotState(3, 4, 1.0, 2.0, 0.1), False)
        assert not M[3:].any()
        assert M[:3] == pytest.approx(observability_matrix(RobotState(3, 4, 1.0, 2.0, 0.1))[:3])

    def test_origin_rejected(self):
        with pytest.raises(InvalidArgumentError):
            observability_matrix(RobotState(0, 0, 0, 1, 0), True)


class TestRank:
    def test_identity(self):
        assert numerical_rank(np.eye(5)) == 5

    def test_tangential_full(self):
        assert numerical_rank(observability_matrix(RobotState(10, 0, math.pi / 2, 1, 0))) == 5

    def test_radial_deficient(self):
        M = observability_matrix(RobotState(10, 0, 0, 1, 0))
        assert not M[:, 1].any()
        assert numerical_rank(M) == 4

    def test_zero_matrix(self):
        assert numerical_rank(np.zeros((5, 5))) == 0

    def test_generic_states_full_rank(self, rng):
        for s in generic_states(rng, 1000):
            M = observability_matrix(s)
            assert numerical_rank(M) == 5 == hand_rank(M)

    def test_without_velocity_deficient(self, rng):
        for _ in range(1000):
            x, y = rng.uniform(-50, 50, 2)
            s = RobotState(x, y, rng.uniform(-4, 4), rng.normal(0, 5), rng.normal())
            assert numerical_rank(observability_matrix(s, False)) <= 4

    def test_row_scaling_invariance(self, rng):
        for s in generic_states(rng, 50) + [RobotState(10, 0, 0, 1, 0)]:
            M = observability_matrix(s)
            D = np.diag(rng.uniform(0.1, 10, 5))
            assert numerical_rank(D @ M) == numerical_rank(M)

    def test_smallest_singular_value_shrinks_toward_radial_line(self):
        # rotate the heading toward the anchor ray at (10, 5)
        ray = math.atan2(5, 10)
        smin = []
        for eps in np.geomspace(1.0, 1e-6, 25):
            _, rep = is_observable(RobotState(10, 5, ray + eps, 1.0, 0.0))
            smin.append(rep.singular_values[-1])
        assert all(a > b for a, b in zip(smin, smin[1:]))
        assert smin[-1] < 1e-5


class TestIsObservable:
    def test_generic(self):
        ok, rep = is_observable(RobotState(10, 0, math.pi / 2, 1, 0))
        assert ok and rep.rank == 5 and all(rep.conditions.values())

    def test_no_velocity(self):
        ok, rep = is_observable(RobotState(10, 0, math.pi / 2, 1, 0), False)
        assert not ok and rep.rank <= 4 and not rep.conditions["velocity_measured"]

    def test_zero_speed(self):
        ok, rep = is_observable(RobotState(3, 4, 0.5, 0.0, 0.0))
        assert not ok and not rep.conditions["v_nonzero"]
        assert rep.rank == numerical_rank(rep.matrix)

    @pytest.mark.parametrize("r", [1.0, 10.0, 300.0])
    @pytest.mark.parametrize("phi", [0.0, 0.7, 2.5, -1.2])
    def test_radial_line_rank_four(self, r, phi):
        for th in (phi, phi + math.pi):  # outbound and inbound
            ok, rep = is_observable(RobotState(r * math.cos(phi), r * math.sin(phi), th, 1.5, 0))
            assert not ok and rep.rank == 4 and not rep.conditions["not_radial_line"]

    def test_report_json(self):
        _, rep = is_observable(RobotState(10, 0, 0, 1, 0))
        doc = rep.to_json()
        assert doc["rank"] == 4 and doc["observable"] is False
        assert len(doc["singular_values"]) == 5 and all(isinstance(v, bool) for v in doc["conditions"].values())
