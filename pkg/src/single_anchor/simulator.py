"""Ground-truth trajectories and synthetic sensor streams.

Truth is integrated in closed form (straight lines and circular arcs under a
constant twist), so it is exact at every sample regardless of step size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .attitude import GRAVITY
from .core import (
    AnchorPose,
    HeadingSample,
    ImuSample,
    InvalidArgumentError,
    ITHETA,
    NoiseConfig,
    RangeSample,
    RobotState,
    StageProfile,
    wrap_angle,
)

DEFAULT_STEP = 0.01
# world magnetic field direction: horizontal component along +x, dipping down
MAG_DIP = math.radians(60.0)
MAG_WORLD = np.array([math.cos(MAG_DIP), 0.0, -math.sin(MAG_DIP)])


@dataclass
class TruthTrack:
    t: np.ndarray
    states: np.ndarray  # (N, 5) rows of [x, y, theta, v, w]

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.states = np.asarray(self.states, dtype=float).reshape(-1, 5)
        if len(self.t) != len(self.states):
            raise InvalidArgumentError("truth timestamps and states differ in length")
        if len(self.t) > 1 and not np.all(np.diff(self.t) > 0):
            raise InvalidArgumentError("truth timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.t)

    @property
    def positions(self) -> np.ndarray:
        return self.states[:, :2]

    def state(self, i: int) -> RobotState:
        return RobotState.from_array(self.states[i])

    def interpolate(self, times) -> np.ndarray:
        """States at arbitrary times: positions and heading linear, rates held."""
        times = np.asarray(times, dtype=float)
        out = np.empty((times.size, 5))
        out[:, 0] = np.interp(times, self.t, self.states[:, 0])
        out[:, 1] = np.interp(times, self.t, self.states[:, 1])
        th = np.interp(times, self.t, np.unwrap(self.states[:, ITHETA]))
        out[:, 2] = np.mod(th + math.pi, 2 * math.pi) - math.pi
        out[:, 2][out[:, 2] == -math.pi] = math.pi
        # rates are piecewise constant; a sample at a boundary takes the new stage
        idx = np.clip(np.searchsorted(self.t, times, side="right") - 1, 0, len(self.t) - 1)
        out[:, 3] = self.states[idx, 3]
        out[:, 4] = self.states[idx, 4]
        return out


def twist_pose(initial: RobotState, v: float, w: float, tau):
    """Closed-form pose after moving ``tau`` seconds at constant (v, w)."""
    tau = np.asarray(tau, dtype=float)
    th0 = initial.theta
    if w == 0.0:
        x = initial.x + v * math.cos(th0) * tau
        y = initial.y + v * math.sin(th0) * tau
        th = np.full_like(tau, th0)
    else:
        th = th0 + w * tau
        rad = v / w
        x = initial.x + rad * (np.sin(th) - math.sin(th0))
        y = initial.y - rad * (np.cos(th) - math.cos(th0))
    return x, y, th


def integrate_stage(initial: RobotState, stage: StageProfile,
                    step: float = DEFAULT_STEP) -> TruthTrack:
    """Sample one constant-twist stage from ``tau = 0`` to ``stage.duration``."""
    if not 0 < step <= stage.duration:
        raise InvalidArgumentError("step must lie in (0, stage.duration]")
    n = int(math.floor(stage.duration / step + 1e-9))
    tau = np.arange(n + 1) * step
    if stage.duration - tau[-1] > 1e-9:
        tau = np.append(tau, stage.duration)
    else:
        tau[-1] = stage.duration
    x, y, th = twist_pose(initial, stage.v, stage.w, tau)
    th = np.mod(th + math.pi, 2 * math.pi) - math.pi
    th[th == -math.pi] = math.pi
    states = np.column_stack([x, y, th, np.full_like(tau, stage.v), np.full_like(tau, stage.w)])
    return TruthTrack(tau, states)


def simulate_stages(start: RobotState, stages: list[StageProfile],
                    step: float = DEFAULT_STEP, t0: float = 0.0) -> TruthTrack:
    """Chain stages; the sample on a boundary carries the next stage's rates."""
    if not stages:
        raise InvalidArgumentError("at least one stage is required")
    ts: list[np.ndarray] = []
    rows: list[np.ndarray] = []
    state = start
    t_start = t0
    for k, stage in enumerate(stages):
        seg = integrate_stage(state, stage, step)
        last = k == len(stages) - 1
        ts.append(seg.t[:None if last else -1] + t_start)
        rows.append(seg.states[:None if last else -1])
        end = seg.states[-1]
        state = RobotState(end[0], end[1], end[2], stage.v, stage.w)
        t_start += stage.duration
    return TruthTrack(np.concatenate(ts), np.vstack(rows))


@dataclass
class SensorLog:
    ranges: list[RangeSample] = field(default_factory=list)
    headings: list[HeadingSample] = field(default_factory=list)
    imu: list[ImuSample] = field(default_factory=list)
    truth: Optional[TruthTrack] = None
    anchor: AnchorPose = AnchorPose()
    noise: Optional[NoiseConfig] = None
    stages: list[StageProfile] = field(default_factory=list)
    meta: dict[str, str] = field(default_factory=dict)

    def is_empty(self) -> bool:
        return not (self.ranges or self.headings or self.imu)


def _sample_times(t_start: float, t_end: float, rate: float) -> np.ndarray:
    if not rate > 0:
        raise InvalidArgumentError("sampling rates must be > 0")
    n = int(math.floor((t_end - t_start) * rate + 1e-9))
    # round to the microsecond resolution used by the log format
    return np.round(t_start + np.arange(n + 1) / rate, 6)


def synth_imu(states: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Noise-free IMU readings for a level robot following planar states."""
    th, v, w = states[:, 2], states[:, 3], states[:, 4]
    n = len(states)
    acc = np.column_stack([np.zeros(n), v * w, np.full(n, GRAVITY)])
    gyro = np.column_stack([np.zeros(n), np.zeros(n), w])
    c, s = np.cos(th), np.sin(th)
    # body = Rz(theta)^T world
    mag = np.column_stack([c * MAG_WORLD[0] + s * MAG_WORLD[1],
                           -s * MAG_WORLD[0] + c * MAG_WORLD[1],
                           np.full(n, MAG_WORLD[2])])
    return acc, gyro, mag


def sensorize(truth: TruthTrack, anchor: AnchorPose = AnchorPose(),
              cfg: NoiseConfig = NoiseConfig(), range_rate: float = 10.0,
              heading_rate: Optional[float] = 100.0, imu_rate: Optional[float] = None,
              stages: Optional[list[StageProfile]] = None) -> SensorLog:
    """Sample truth into noisy range / heading / IMU streams.

    Noise draws happen in a fixed order (ranges, headings, IMU) from a
    generator seeded with ``cfg.seed``, so equal inputs give identical logs.
    """
    rng = np.random.default_rng(cfg.seed)
    t0, t1 = float(truth.t[0]), float(truth.t[-1])

    rt = _sample_times(t0, t1, range_rate)
    rs = truth.interpolate(rt)
    dist = np.hypot(rs[:, 0] - anchor[0], rs[:, 1] - anchor[1])
    meas = np.maximum(dist + rng.normal(0.0, 1.0, rt.size) * cfg.sigma_r, 0.0)
    ranges = [RangeSample(float(t), float(r)) for t, r in zip(rt, meas)]

    headings: list[HeadingSample] = []
    if heading_rate:
        ht = _sample_times(t0, t1, heading_rate)
        hs = truth.interpolate(ht)
        noisy = hs[:, 2] + rng.normal(0.0, 1.0, ht.size) * cfg.sigma_theta
        headings = [HeadingSample(float(t), wrap_angle(float(a))) for t, a in zip(ht, noisy)]

    imu: list[ImuSample] = []
    if imu_rate:
        it = _sample_times(t0, t1, imu_rate)
        acc, gyro, mag = synth_imu(truth.interpolate(it))
        acc = acc + rng.normal(0.0, 1.0, acc.shape) * cfg.sigma_acc
        gyro = gyro + rng.normal(0.0, 1.0, gyro.shape) * cfg.sigma_gyro
        mag = mag + rng.normal(0.0, 1.0, mag.shape) * cfg.sigma_mag
        imu = [ImuSample(float(t), tuple(map(float, a)), tuple(map(float, g)), tuple(map(float, m)))
               for t, a, g, m in zip(it, acc, gyro, mag)]

    return SensorLog(ranges=ranges, headings=headings, imu=imu, truth=truth,
                     anchor=AnchorPose(*anchor), noise=cfg, stages=list(stages or []))
