"""Named simulation scenarios used by the CLI and the acceptance suite.

Every scenario is a fixed stage table plus sensor settings, so a name and a
seed fully determine the generated log. Stage tuples are ``(duration, v, w)``.

``paper-5stage``
    Anchor at the origin, start at (10, 0) heading 45 degrees, five stages
    alternating straight legs and turns, sigma_r = 0.2 m, sigma_theta = 0.1
    rad. Ranges at 10 Hz, headings at 100 Hz, plus a gyro stream (100 Hz,
    0.005 rad/s noise) feeding the straight-motion gate.
``paper-10stage``
    Noise-free ten-stage table, straight legs separated by turns, speeds
    from 0.5 to 10 m/s. Meant for checking that the speed estimator is exact
    on straight legs.
``long-range``
    (10, 0) to (10, 250) at 10 m/s, every 0.01 s a range sample.
``radial-line``
    Straight outbound motion along the anchor's x axis, the observability
    blind spot.
``recorded-style``
    Like ``paper-5stage`` but without a heading stream: heading comes from
    a noisy accelerometer/gyro/magnetometer stream, as on a real robot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

from .core import AnchorPose, InvalidArgumentError, NoiseConfig, RobotState, StageProfile
from .simulator import SensorLog, TruthTrack, sensorize, simulate_stages

START = (10.0, 0.0)

FIVE_STAGE = (
    (10.0, 3.0, 0.0),
    (6.0, 1.5, 0.25),
    (12.0, 5.0, 0.0),
    (6.0, 1.5, 0.25),
    (12.0, 4.0, 0.0),
)

TEN_STAGE = (
    (10.0, 2.0, 0.0),
    (4.0, 1.0, 0.4),
    (8.0, 5.0, 0.0),
    (5.0, 0.5, -0.3),
    (5.0, 10.0, 0.0),
    (3.0, 2.0, 0.5),
    (30.0, 0.5, 0.0),
    (4.0, 1.5, -0.4),
    (8.0, 4.0, 0.0),
    (4.0, 1.0, 0.3),
)


@dataclass(frozen=True)
class Scenario:
    name: str
    start: RobotState
    stages: tuple[StageProfile, ...]
    noise: NoiseConfig
    range_rate: float = 10.0
    heading_rate: Optional[float] = 100.0
    imu_rate: Optional[float] = 100.0
    # estimator overrides suited to the scenario (e.g. raw ranges when noise-free)
    config: dict[str, str] = field(default_factory=dict)

    def with_seed(self, seed: int) -> Scenario:
        return replace(self, noise=replace(self.noise, seed=seed))

    def truth(self, step: float = 0.01) -> TruthTrack:
        return simulate_stages(self.start, list(self.stages), step)

    def simulate(self, seed: Optional[int] = None) -> tuple[TruthTrack, SensorLog]:
        sc = self if seed is None else self.with_seed(seed)
        truth = sc.truth()
        log = sensorize(truth, AnchorPose(0.0, 0.0), sc.noise, range_rate=sc.range_rate,
                        heading_rate=sc.heading_rate, imu_rate=sc.imu_rate,
                        stages=list(sc.stages))
        log.meta.update({"scenario": sc.name, "seed": str(sc.noise.seed)})
        return truth, log


def _stages(table) -> tuple[StageProfile, ...]:
    return tuple(StageProfile(d, v, w) for d, v, w in table)


def _start(theta: float, table) -> RobotState:
    _, v, w = table[0]
    return RobotState(START[0], START[1], theta, v, w)


SCENARIOS: dict[str, Scenario] = {
    "paper-5stage": Scenario(
        "paper-5stage", _start(math.pi / 4, FIVE_STAGE), _stages(FIVE_STAGE),
        NoiseConfig(sigma_r=0.2, sigma_theta=0.1, sigma_gyro=0.005),
    ),
    "paper-10stage": Scenario(
        "paper-10stage", _start(math.pi / 3, TEN_STAGE), _stages(TEN_STAGE),
        NoiseConfig(sigma_r=0.0, sigma_theta=0.0),
        config={"smooth_ranges": "false", "th_distance": "0.5"},
    ),
    "long-range": Scenario(
        "long-range", RobotState(10.0, 0.0, math.pi / 2, 10.0, 0.0),
        (StageProfile(25.0, 10.0, 0.0),), NoiseConfig(sigma_r=0.2, sigma_theta=0.1),
        range_rate=100.0,
    ),
    "radial-line": Scenario(
        "radial-line", RobotState(10.0, 0.0, 0.0, 2.0, 0.0),
        (StageProfile(20.0, 2.0, 0.0),), NoiseConfig(sigma_r=0.2, sigma_theta=0.1),
    ),
    "recorded-style": Scenario(
        "recorded-style", _start(math.pi / 4, FIVE_STAGE), _stages(FIVE_STAGE),
        NoiseConfig(sigma_r=0.2, sigma_theta=0.0, sigma_gyro=0.005, sigma_acc=0.05,
                    sigma_mag=0.01),
        heading_rate=None,
    ),
}


def get_scenario(name: str) -> Scenario:
    try:
        return SCENARIOS[name]
    except KeyError:
        known = ", ".join(sorted(SCENARIOS))
        raise InvalidArgumentError(f"unknown scenario {name!r} (known: {known})") from None


def paper_scenario_sim(seed: int = 0, name: str = "paper-5stage") -> tuple[TruthTrack, SensorLog]:
    """Truth and noisy log of the five-stage scenario (or a named variant)."""
    truth, log = get_scenario(name).simulate(seed)
    noise = log.noise
    log.meta.update({"sigma_r": repr(noise.sigma_r), "sigma_theta": repr(noise.sigma_theta)})
    return truth, log
