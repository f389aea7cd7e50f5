"""End-to-end tracking loop.

Events from the merged sensor streams are processed in time order:

* range: EKF predict + range update, then the range smoother; when the robot
  is going straight and the smoothed range moved past the trigger threshold,
  a key pair goes to the speed estimator and a fresh estimate is blended
  into the EKF speed;
* heading: EKF predict + heading update;
* imu: orientation filter step, whose heading then updates the EKF. When the
  log also carries a direct heading stream, IMU samples only feed the gyro
  used by the straight-motion gate.

``mode="vanilla"`` disables the speed-estimator branch entirely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Literal, NamedTuple, Optional

import numpy as np

from .attitude import OrientationFilter
from .core import (
    EstimatorConfig,
    InvalidArgumentError,
    IW,
    PoseTrack,
    RangeSample,
    SingularGeometryError,
)
from .ekf import (
    EkfBelief,
    ekf_blend_speed,
    ekf_predict,
    ekf_update_heading,
    ekf_update_range,
    initial_belief,
)
from .range_filter import RangeSmoother
from .simulator import SensorLog
from .speed import SpeedEstimator

Mode = Literal["with", "vanilla"]
MODES = ("with", "vanilla")

# tie-break order for simultaneous events
_KIND_ORDER = {"range": 0, "imu": 1, "heading": 2}


class PipelineEvent(NamedTuple):
    t: float
    kind: str
    payload: Any


class SpeedTraceRow(NamedTuple):
    t: float
    raw_speed: float
    smoothed_speed: float
    blended: bool


def linear_motion_gate(gyro, th: float) -> bool:
    """True when the rotation rate is small enough to assume straight motion."""
    rate = float(np.linalg.norm(np.atleast_1d(np.asarray(gyro, dtype=float))))
    return rate < th


def _first_violation(times: Iterable[float]) -> Optional[int]:
    prev = -math.inf
    for i, t in enumerate(times):
        if not t > prev:
            return i
        prev = t
    return None


def merge_events(log: SensorLog) -> list[PipelineEvent]:
    """Globally time-ordered event list; ties go range, imu, heading."""
    streams = (("range", log.ranges), ("imu", log.imu), ("heading", log.headings))
    keyed = []
    for kind, samples in streams:
        bad = _first_violation(s.t for s in samples)
        if bad is not None:
            raise InvalidArgumentError(
                f"{kind} stream out of order at sample {bad} (t={samples[bad].t!r})")
        order = _KIND_ORDER[kind]
        keyed.extend(((s.t, order, i), PipelineEvent(s.t, kind, s)) for i, s in enumerate(samples))
    keyed.sort(key=lambda item: item[0])
    return [ev for _, ev in keyed]


@dataclass
class TrackResult:
    """Pose track plus the diagnostics the CLI writes next to it."""

    track: PoseTrack
    speed_trace: list[SpeedTraceRow] = field(default_factory=list)
    counters: dict[str, int] = field(default_factory=dict)


class Tracker:
    def __init__(self, cfg: EstimatorConfig, mode: Mode = "with", anchor=(0.0, 0.0),
                 imu_headings: bool = True):
        if mode not in MODES:
            raise InvalidArgumentError(f"mode must be one of {MODES}, got {mode!r}")
        cfg.validate()
        self.cfg = cfg
        self.mode = mode
        self.anchor = tuple(anchor)
        # with a direct heading stream the IMU only supplies the gate's gyro
        self.imu_headings = imu_headings
        self.belief: Optional[EkfBelief] = None
        self.smoother = RangeSmoother(cfg.sigma_r, cfg.kf_rate_noise, cfg.kf_gate_sigma,
                                      cfg.kf_init_sigma_rate)
        self.estimator = SpeedEstimator(cfg.th_distance, cfg.window_ratio, cfg.max_window,
                                        cfg.sigma_r)
        self.orientation = OrientationFilter(cfg.gain_acc, cfg.gain_mag)
        self.last_gyro: Optional[np.ndarray] = None
        self.last_range: Optional[float] = None
        self.last_heading: Optional[float] = None
        self.speed_trace: list[SpeedTraceRow] = []
        self.counters = {"singular_range": 0, "blends": 0, "flushes": 0, "gate_closed": 0}

        self._t: list[float] = []
        self._mean: list[np.ndarray] = []
        self._var: list[np.ndarray] = []
        self._flag: list[bool] = []

    def _maybe_init(self, t: float) -> None:
        if self.belief is None and self.last_range is not None and self.last_heading is not None:
            self.belief = initial_belief(self.last_range, self.last_heading, t, self.cfg,
                                         self.anchor)

    def _predict_to(self, t: float) -> None:
        dt = t - self.belief.t
        if dt > 0:
            self.belief = ekf_predict(self.belief, dt, self.cfg.sigma_a, self.cfg.sigma_b)

    def _gyro_rate(self):
        if self.last_gyro is not None:
            return self.last_gyro
        return self.belief.mean[IW]

    def process(self, ev: PipelineEvent) -> None:
        blended = False
        if ev.kind == "range":
            sample: RangeSample = ev.payload
            self.last_range = sample.r
            self._maybe_init(ev.t)
            if self.belief is not None:
                self._predict_to(ev.t)
                try:
                    self.belief = ekf_update_range(self.belief, sample.r, self.anchor,
                                                   self.cfg.sigma_r)
                except SingularGeometryError:
                    self.counters["singular_range"] += 1
            s_range = self.smoother.step(sample) if self.cfg.smooth_ranges else sample.r
            if self.mode == "with" and self.belief is not None:
                blended = self._speed_branch(ev.t, s_range)
        elif ev.kind == "heading":
            self.last_heading = ev.payload.theta
            self._maybe_init(ev.t)
            if self.belief is not None:
                self._predict_to(ev.t)
                self.belief = ekf_update_heading(self.belief, ev.payload.theta,
                                                 self.cfg.sigma_theta)
        elif ev.kind == "imu":
            self.last_gyro = np.asarray(ev.payload.gyro, dtype=float)
            if not self.imu_headings:
                return
            self.last_heading = self.orientation.update(ev.payload)
            self._maybe_init(ev.t)
            if self.belief is not None:
                self._predict_to(ev.t)
                self.belief = ekf_update_heading(self.belief, self.last_heading,
                                                 self.cfg.sigma_theta)
        else:
            raise InvalidArgumentError(f"unknown event kind {ev.kind!r}")

        if self.belief is not None:
            self._t.append(ev.t)
            self._mean.append(self.belief.mean.copy())
            self._var.append(np.diag(self.belief.P).copy())
            self._flag.append(blended)

    def _speed_branch(self, t: float, s_range: float) -> bool:
        if not linear_motion_gate(self._gyro_rate(), self.cfg.th_linear_motion):
            self.counters["gate_closed"] += 1
            if self.estimator.key_pairs:
                # constant-velocity segment broken: old key pairs no longer apply
                self.estimator.flush()
                self.counters["flushes"] += 1
            return False
        est = self.estimator.offer(s_range, t)
        if est is None:
            return False
        raw = est.raw_v if not est.stale else math.nan
        if est.stale:
            self.speed_trace.append(SpeedTraceRow(t, raw, est.v, False))
            return False
        self.belief = ekf_blend_speed(self.belief, est, self.cfg.blend_w,
                                      self.cfg.variance_weighted_blend)
        self.counters["blends"] += 1
        self.speed_trace.append(SpeedTraceRow(t, raw, est.v, True))
        return True

    def result(self) -> TrackResult:
        n = len(self._t)
        track = PoseTrack(
            t=np.asarray(self._t, dtype=float),
            states=np.asarray(self._mean, dtype=float).reshape(n, 5),
            cov_diag=np.asarray(self._var, dtype=float).reshape(n, 5),
            speed_corrected=np.asarray(self._flag, dtype=bool),
        )
        counters = dict(self.counters)
        counters["failed_solves"] = self.estimator.failed_solves
        counters["range_outliers"] = self.smoother.outliers
        return TrackResult(track, list(self.speed_trace), counters)


def run_pipeline_full(log: SensorLog, cfg: Optional[EstimatorConfig] = None,
                      mode: Mode = "with") -> TrackResult:
    cfg = cfg or EstimatorConfig()
    if log.is_empty():
        raise InvalidArgumentError("sensor log is empty")
    events = merge_events(log)
    tracker = Tracker(cfg, mode, log.anchor, imu_headings=not log.headings)
    for ev in events:
        tracker.process(ev)
    return tracker.result()


def run_pipeline(log: SensorLog, cfg: Optional[EstimatorConfig] = None,
                 mode: Mode = "with") -> PoseTrack:
    return run_pipeline_full(log, cfg, mode).track


def run_speed_estimator(log: SensorLog, cfg: Optional[EstimatorConfig] = None,
                        gyro_rates=None) -> list[SpeedTraceRow]:
    """Range smoother, straight-motion gate and speed estimator without the EKF.

    The gate reads the IMU gyro when the log has one; otherwise
    ``gyro_rates`` (a callable of time) or, failing that, the truth track's
    yaw rate. Every produced estimate is returned, stale ones included.
    """
    cfg = cfg or EstimatorConfig()
    smoother = RangeSmoother(cfg.sigma_r, cfg.kf_rate_noise, cfg.kf_gate_sigma,
                             cfg.kf_init_sigma_rate)
    estimator = SpeedEstimator(cfg.th_distance, cfg.window_ratio, cfg.max_window, cfg.sigma_r)
    if log.imu:
        imu_t = np.array([s.t for s in log.imu])
        imu_g = np.array([s.gyro for s in log.imu])

        def gyro_at(t):
            i = max(int(np.searchsorted(imu_t, t, side="right")) - 1, 0)
            return imu_g[i]
    elif gyro_rates is not None:
        gyro_at = gyro_rates
    elif log.truth is not None:
        truth = log.truth

        def gyro_at(t):
            return truth.interpolate([t])[0, 4]
    else:
        raise InvalidArgumentError("no gyro source for the straight-motion gate")

    rows: list[SpeedTraceRow] = []
    bad = _first_violation(s.t for s in log.ranges)
    if bad is not None:
        raise InvalidArgumentError(f"range stream out of order at sample {bad}")
    for sample in log.ranges:
        s_range = smoother.step(sample) if cfg.smooth_ranges else sample.r
        if not linear_motion_gate(gyro_at(sample.t), cfg.th_linear_motion):
            if estimator.key_pairs:
                estimator.flush()
            continue
        est = estimator.offer(s_range, sample.t)
        if est is not None:
            raw = math.nan if est.stale else est.raw_v
            rows.append(SpeedTraceRow(sample.t, raw, est.v, not est.stale))
    return rows
