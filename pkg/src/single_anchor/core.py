"""Shared types, angle helpers and configuration.

Conventions used across the package:

* SI units everywhere; timestamps are float seconds relative to stream start.
* Heading ``theta`` is measured counterclockwise from the +x axis and kept in
  (-pi, pi].
* The planar robot state is the 5-vector ``[x, y, theta, v, w]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import NamedTuple

import numpy as np

TWO_PI = 2.0 * math.pi

# state vector indices
IX, IY, ITHETA, IV, IW = range(5)
STATE_DIM = 5


class EstimationError(Exception):
    """Base class for every structured error raised by this package."""


class InvalidArgumentError(EstimationError, ValueError):
    pass


class NoSolutionError(EstimationError, ArithmeticError):
    """A range triple admits no real speed (negative discriminant)."""

    def __init__(self, message: str, discriminant: float):
        super().__init__(f"{message} (discriminant={discriminant:.6g})")
        self.discriminant = discriminant


class ConditioningError(EstimationError, ArithmeticError):
    def __init__(self, message: str, denom: float):
        super().__init__(f"{message} (denom={denom:.6g})")
        self.denom = denom


class SingularGeometryError(EstimationError, ArithmeticError):
    pass


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    if not math.isfinite(theta):
        raise InvalidArgumentError(f"angle must be finite, got {theta!r}")
    r = math.remainder(theta, TWO_PI)
    if r <= -math.pi:
        r += TWO_PI
    return r


def angle_diff(a: float, b: float) -> float:
    """Smallest signed difference a - b, in (-pi, pi]."""
    return wrap_angle(a - b)


@dataclass(frozen=True)
class RobotState:
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0
    v: float = 0.0
    w: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            if not math.isfinite(getattr(self, f.name)):
                raise InvalidArgumentError(f"RobotState.{f.name} must be finite")
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta, self.v, self.w], dtype=float)

    @classmethod
    def from_array(cls, a) -> RobotState:
        return cls(*(float(c) for c in a[:STATE_DIM]))


class ControlInput(NamedTuple):
    a: float = 0.0  # linear acceleration [m/s^2]
    b: float = 0.0  # angular acceleration [rad/s^2]


class AnchorPose(NamedTuple):
    x_a: float = 0.0
    y_a: float = 0.0


class RangeSample(NamedTuple):
    t: float
    r: float


class HeadingSample(NamedTuple):
    t: float
    theta: float


class ImuSample(NamedTuple):
    t: float
    acc: tuple[float, float, float]
    gyro: tuple[float, float, float]
    mag: tuple[float, float, float]


@dataclass(frozen=True)
class NoiseConfig:
    """Sensor noise levels used by the simulator.

    The defaults (0.2 m range noise, 0.1 rad heading noise) are the values of
    the reference simulation protocol.
    """

    sigma_r: float = 0.2
    sigma_theta: float = 0.1
    sigma_gyro: float = 0.0
    sigma_acc: float = 0.0
    sigma_mag: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("sigma_r", "sigma_theta", "sigma_gyro", "sigma_acc", "sigma_mag"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val >= 0.0):
                raise InvalidArgumentError(f"{name} must be a finite value >= 0")


@dataclass
class EstimatorConfig:
    """Tunables of the tracking pipeline.

    ``blend_w`` is the weight kept on the filter's own speed when a fresh
    speed estimate is blended in (1 keeps the filter value, 0 replaces it).
    """

    # speed estimator
    th_distance: float = 5.0
    th_linear_motion: float = 0.05
    window_ratio: float = 0.5
    max_window: int = 200
    blend_w: float = 0.5
    variance_weighted_blend: bool = False

    # measurement noise assumed by the filters
    sigma_r: float = 0.2
    sigma_theta: float = 0.1

    # EKF process noise (white acceleration spectral densities)
    sigma_a: float = 0.5
    sigma_b: float = 1.0

    # EKF initial uncertainty (position std is first_range / 2)
    init_sigma_theta: float = 0.2
    init_sigma_v: float = 2.0
    init_sigma_w: float = 1.0

    # range smoother
    kf_rate_noise: float = 0.5
    kf_gate_sigma: float = 5.0
    kf_init_sigma_rate: float = 2.0

    # orientation filter
    gain_acc: float = 0.01
    gain_mag: float = 0.01

    # ignore raw ranges when smoothing the speed-estimator input (noise-free data)
    smooth_ranges: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.th_distance > 0:
            raise InvalidArgumentError("th_distance must be > 0")
        if not self.th_linear_motion > 0:
            raise InvalidArgumentError("th_linear_motion must be > 0")
        if not self.window_ratio > 0:
            raise InvalidArgumentError("window_ratio must be > 0")
        if self.max_window < 1:
            raise InvalidArgumentError("max_window must be >= 1")
        if not 0.0 <= self.blend_w <= 1.0:
            raise InvalidArgumentError("blend_w must lie in [0, 1]")
        for name in ("sigma_r", "sigma_theta", "sigma_a", "sigma_b", "kf_rate_noise"):
            if not getattr(self, name) >= 0:
                raise InvalidArgumentError(f"{name} must be >= 0")
        if not 0.0 <= self.gain_acc <= 1.0 or not 0.0 <= self.gain_mag <= 1.0:
            raise InvalidArgumentError("orientation gains must lie in [0, 1]")

    @classmethod
    def from_mapping(cls, values: dict[str, str]) -> EstimatorConfig:
        """Build a config from string key/values (unknown keys rejected)."""
        names = {f.name for f in fields(cls)}
        kwargs: dict[str, object] = {}
        for key, raw in values.items():
            if key not in names:
                raise InvalidArgumentError(f"unknown config key {key!r}")
            default = getattr(cls(), key)
            kwargs[key] = _coerce(raw, type(default), key)
        return cls(**kwargs)

    def as_dict(self) -> dict[str, object]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _coerce(raw: str, kind: type, key: str):
    text = str(raw).strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        val = float(text)
    except ValueError:
        raise InvalidArgumentError(f"bad value for {key!r}: {raw!r}") from None
    if math.isnan(val):
        raise InvalidArgumentError(f"bad value for {key!r}: {raw!r}")
    return val


@dataclass(frozen=True)
class StageProfile:
    duration: float
    v: float
    w: float = 0.0

    def __post_init__(self):
        if not self.duration > 0:
            raise InvalidArgumentError("stage duration must be > 0")


@dataclass
class PoseTrack:
    """Filter output: one row per processed event."""

    t: np.ndarray
    states: np.ndarray  # (N, 5)
    cov_diag: np.ndarray  # (N, 5)
    speed_corrected: np.ndarray  # (N,) bool
    extra: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def positions(self) -> np.ndarray:
        return self.states[:, :2]
