"""Speed magnitude from three anchor ranges taken along a straight line.

A robot moving at constant speed ``v`` on a line whose closest point to the
anchor is at distance ``r_perp`` sees ranges

    r_i**2 = r_perp**2 + (s0 + v * tau_i)**2,    tau = (0, dt1, dt1 + dt2)

Eliminating ``r_perp`` and ``s0`` gives

    v**2 = ((r2**2 - r1**2) - (dt2/dt1) * (r1**2 - r0**2)) / (dt2 * (dt1 + dt2))

which reduces to ``(r2**2 + r0**2 - 2 r1**2) / (2 dt**2)`` for uniform
sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

from .core import InvalidArgumentError, NoSolutionError
from .uncertainty import speed_variance_general

# relative tolerance under which a slightly negative numerator counts as zero
_ROUNDING_TOL = 1e-12


class KeyRangePair(NamedTuple):
    r: float
    t: float


class LineGeometry(NamedTuple):
    v: float
    r_perp: float
    s0: float


@dataclass(frozen=True)
class SpeedEstimate:
    v: float
    var_v: float
    t: float
    stale: bool = False
    raw_v: Optional[float] = None
    window: int = 1


def _check_ranges(*ranges: float) -> None:
    for r in ranges:
        if not (math.isfinite(r) and r >= 0.0):
            raise InvalidArgumentError(f"ranges must be finite and >= 0, got {r!r}")


def _speed_squared(r0: float, r1: float, r2: float, dt1: float, dt2: float) -> float:
    if not (dt1 > 0.0 and dt2 > 0.0):
        raise InvalidArgumentError(f"time intervals must be > 0, got {dt1!r}, {dt2!r}")
    _check_ranges(r0, r1, r2)
    a, b, c = r0 * r0, r1 * r1, r2 * r2
    k = dt2 / dt1
    # grouped so that k = 1 performs exactly the uniform-interval arithmetic
    num = (c + k * a) - (1.0 + k) * b
    if num < 0.0:
        scale = max(a, b, c, 1.0) * (1.0 + k)
        if num < -_ROUNDING_TOL * scale:
            raise NoSolutionError("range triple is inconsistent with straight-line motion", num)
        num = 0.0
    return num / (dt2 * (dt1 + dt2))


def solve_speed_general(r0: float, r1: float, r2: float, dt1: float, dt2: float) -> float:
    """Speed from three ranges with arbitrary sampling intervals.

    Raises ``NoSolutionError`` when the triple is inconsistent with any
    straight line (possible once ranges are noisy).
    """
    return math.sqrt(_speed_squared(r0, r1, r2, dt1, dt2))


def solve_speed_uniform(r0: float, r1: float, r2: float, dt: float) -> float:
    if not dt > 0.0:
        raise InvalidArgumentError(f"dt must be > 0, got {dt!r}")
    _check_ranges(r0, r1, r2)
    d = r2 * r2 + r0 * r0 - 2.0 * r1 * r1
    if d < 0.0:
        if d < -_ROUNDING_TOL * max(r0 * r0, r1 * r1, r2 * r2, 1.0):
            raise NoSolutionError("range triple is inconsistent with straight-line motion", d)
        d = 0.0
    return math.sqrt(d / (2.0 * dt * dt))


def solve_line_geometry(r0: float, r1: float, r2: float, dt1: float, dt2: float) -> LineGeometry:
    """Recover speed, anchor-to-line distance and along-line offset.

    ``s0`` is the signed position of the first sample measured from the foot
    of the perpendicular, positive in the direction of travel. A stationary
    triple leaves the line undetermined; by convention ``(r_perp=r0, s0=0)``.
    """
    v = solve_speed_general(r0, r1, r2, dt1, dt2)
    if v == 0.0:
        return LineGeometry(0.0, r0, 0.0)
    s0 = ((r1 * r1 - r0 * r0) - v * v * dt1 * dt1) / (2.0 * v * dt1)
    perp_sq = r0 * r0 - s0 * s0
    if perp_sq < 0.0:
        if perp_sq < -1e-9 * max(r0 * r0, 1.0):
            raise NoSolutionError("imaginary anchor-to-line distance", perp_sq)
        perp_sq = 0.0
    return LineGeometry(v, math.sqrt(perp_sq), s0)


def window_length(range_m: float, window_ratio: float, max_window: Optional[int] = None) -> int:
    """Number of raw speeds averaged at a given distance from the anchor."""
    if range_m < 0:
        raise InvalidArgumentError("range must be >= 0")
    n = max(1, math.ceil(range_m * window_ratio))
    if max_window is not None:
        n = min(n, max_window)
    return n


class SpeedEstimator:
    """Key-range bookkeeping plus a distance-dependent moving average.

    Feed smoothed ranges through :meth:`offer`; a key pair is stored only when
    the range moved by more than ``th_distance`` since the previous key pair.
    Every new key pair after the second yields a raw speed from the latest
    triple, and the returned estimate averages the last ``window_length``
    raw speeds.
    """

    def __init__(self, th_distance: float = 5.0, window_ratio: float = 0.5,
                 max_window: int = 200, sigma_r: float = 0.2):
        if not th_distance > 0:
            raise InvalidArgumentError("th_distance must be > 0")
        if not window_ratio > 0:
            raise InvalidArgumentError("window_ratio must be > 0")
        self.th_distance = th_distance
        self.window_ratio = window_ratio
        self.max_window = max_window
        self.sigma_r = sigma_r
        self.key_pairs: list[KeyRangePair] = []
        self.raw_speeds: list[float] = []
        self.raw_variances: list[float] = []
        self.failed_solves = 0
        self.last: Optional[SpeedEstimate] = None

    def triggers(self, r: float) -> bool:
        return not self.key_pairs or abs(r - self.key_pairs[-1].r) > self.th_distance

    def offer(self, r: float, t: float) -> Optional[SpeedEstimate]:
        """Store ``(r, t)`` as a key pair if the range trigger fires."""
        if not self.triggers(r):
            return None
        return self.push_key_range(KeyRangePair(r, t))

    def push_key_range(self, pair: KeyRangePair) -> Optional[SpeedEstimate]:
        if self.key_pairs:
            prev = self.key_pairs[-1]
            if not pair.t > prev.t:
                raise InvalidArgumentError(
                    f"key pair timestamp {pair.t!r} does not follow {prev.t!r}")
            if abs(pair.r - prev.r) < self.th_distance:
                raise InvalidArgumentError(
                    f"key pair range change {abs(pair.r - prev.r):.6g} below th_distance")
        self.key_pairs.append(pair)
        if len(self.key_pairs) < 3:
            return None

        (r0, t0), (r1, t1), (r2, t2) = self.key_pairs[-3:]
        try:
            raw = solve_speed_general(r0, r1, r2, t1 - t0, t2 - t1)
        except NoSolutionError:
            self.failed_solves += 1
            if self.last is None:
                return None
            self.last = replace(self.last, stale=True)
            return self.last

        self.raw_speeds.append(raw)
        self.raw_variances.append(
            speed_variance_general(r0, r1, r2, t1 - t0, t2 - t1, self.sigma_r))
        n = min(window_length(r2, self.window_ratio, self.max_window), len(self.raw_speeds))
        recent = self.raw_speeds[-n:]
        var_mean = sum(self.raw_variances[-n:]) / n
        self.last = SpeedEstimate(
            v=sum(recent) / n,
            var_v=var_mean / n,
            t=t2,
            raw_v=raw,
            window=n,
        )
        return self.last

    def flush(self) -> None:
        """Forget key pairs and raw speeds (the straight-line segment ended)."""
        self.key_pairs.clear()
        self.raw_speeds.clear()
        self.raw_variances.clear()

    @property
    def stale(self) -> bool:
        return self.last is None or self.last.stale
