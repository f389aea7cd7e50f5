import math

import numpy as np
import pytest

from single_anchor.core import AnchorPose, NoiseConfig, RobotState, StageProfile
from single_anchor.simulator import sensorize, simulate_stages


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def line_ranges(r_perp, s0, v, times, anchor=(0.0, 0.0)):
    """Forward oracle: distances from the anchor to points on the line y = r_perp."""
    s = s0 + v * np.asarray(times, dtype=float)
    return np.hypot(s - anchor[0], r_perp - anchor[1])


@pytest.fixture(scope="session")
def straight_truth():
    return simulate_stages(RobotState(10.0, 0.0, math.pi / 2, 2.0, 0.0),
                           [StageProfile(10.0, 2.0, 0.0)])


@pytest.fixture(scope="session")
def clean_straight_log(straight_truth):
    return sensorize(straight_truth, AnchorPose(), NoiseConfig(sigma_r=0.0, sigma_theta=0.0))


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_report(request):
    """Record one PASS/FAIL line per acceptance criterion for the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def report(number: int, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        print(line)
        lines.append(line)

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
