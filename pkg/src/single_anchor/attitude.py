"""Quaternion complementary filter producing the heading measurement.

Quaternions are ``(w, x, y, z)`` and rotate body vectors into the world frame
(x east, y north, z up). Each update integrates the gyro, then nudges the
estimate toward the attitude implied by gravity and the magnetic field:

* tilt: the rotation taking the predicted world-frame accelerometer direction
  onto +z, scaled by ``gain_acc``;
* yaw: a rotation about world z taking the horizontal magnetometer direction
  onto +x, scaled by ``gain_mag``.

Fractional corrections are the spherical interpolation from identity to the
full correction, i.e. the same axis with the angle scaled by the gain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .core import ImuSample, InvalidArgumentError, wrap_angle

GRAVITY = 9.80665
_GIMBAL_LIMIT = math.radians(89.0)


class Quaternion(NamedTuple):
    w: float = 1.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def norm(self) -> float:
        return math.sqrt(self.w ** 2 + self.x ** 2 + self.y ** 2 + self.z ** 2)

    def normalized(self) -> Quaternion:
        n = self.norm()
        if n == 0.0 or not math.isfinite(n):
            raise InvalidArgumentError("cannot normalize a zero or non-finite quaternion")
        return Quaternion(self.w / n, self.x / n, self.y / n, self.z / n)

    def conj(self) -> Quaternion:
        return Quaternion(self.w, -self.x, -self.y, -self.z)


IDENTITY = Quaternion()


def quat_mul(p: Quaternion, q: Quaternion) -> Quaternion:
    pw, px, py, pz = p
    qw, qx, qy, qz = q
    return Quaternion(
        pw * qw - px * qx - py * qy - pz * qz,
        pw * qx + px * qw + py * qz - pz * qy,
        pw * qy - px * qz + py * qw + pz * qx,
        pw * qz + px * qy - py * qx + pz * qw,
    )


def quat_from_axis_angle(axis, angle: float) -> Quaternion:
    ax = np.asarray(axis, dtype=float)
    n = float(np.linalg.norm(ax))
    if n == 0.0 or angle == 0.0:
        return IDENTITY
    s = math.sin(0.5 * angle) / n
    return Quaternion(math.cos(0.5 * angle), ax[0] * s, ax[1] * s, ax[2] * s)


def quat_from_rotvec(rv) -> Quaternion:
    rv = np.asarray(rv, dtype=float)
    return quat_from_axis_angle(rv, float(np.linalg.norm(rv)))


def quaternion_from_euler(yaw: float, pitch: float, roll: float) -> Quaternion:
    """Z-Y-X (yaw, then pitch, then roll) Euler angles to a quaternion."""
    cy, sy = math.cos(yaw / 2), math.sin(yaw / 2)
    cp, sp = math.cos(pitch / 2), math.sin(pitch / 2)
    cr, sr = math.cos(roll / 2), math.sin(roll / 2)
    return Quaternion(
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    )


def euler_from_quaternion(q: Quaternion) -> tuple[float, float, float]:
    """Return ``(yaw, pitch, roll)`` for the Z-Y-X convention."""
    w, x, y, z = q
    yaw = math.atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))
    sinp = max(-1.0, min(1.0, 2.0 * (w * y - z * x)))
    pitch = math.asin(sinp)
    roll = math.atan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y))
    return yaw, pitch, roll


def rotation_matrix(q: Quaternion) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def rotate(q: Quaternion, v) -> np.ndarray:
    """Rotate a body-frame vector into the world frame."""
    return rotation_matrix(q) @ np.asarray(v, dtype=float)


def heading_from_quaternion(q: Quaternion) -> float:
    """Yaw about world vertical, in (-pi, pi]."""
    return wrap_angle(euler_from_quaternion(q)[0])


def heading_is_reliable(q: Quaternion) -> bool:
    """False near gimbal lock (|pitch| > 89 deg), where yaw is ill-defined."""
    return abs(euler_from_quaternion(q)[1]) <= _GIMBAL_LIMIT


@dataclass(frozen=True)
class AttitudeState:
    q: Quaternion = IDENTITY
    gain_acc: float = 0.01
    gain_mag: float = 0.01
    acc_skipped: bool = False
    mag_skipped: bool = False

    def __post_init__(self):
        if not (0.0 <= self.gain_acc <= 1.0 and 0.0 <= self.gain_mag <= 1.0):
            raise InvalidArgumentError("gains must lie in [0, 1]")


def _unit(v) -> np.ndarray | None:
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    if n == 0.0 or not math.isfinite(n):
        return None
    return v / n


def tilt_correction(q: Quaternion, acc, gain: float) -> Quaternion | None:
    """World-frame rotation moving the measured gravity direction toward +z."""
    a = _unit(acc)
    if a is None:
        return None
    g = rotate(q, a)
    cos_ang = max(-1.0, min(1.0, float(g[2])))
    axis = np.array([g[1], -g[0], 0.0])  # g x ez
    if np.linalg.norm(axis) < 1e-12:
        if cos_ang > 0:
            return IDENTITY
        axis = np.array([1.0, 0.0, 0.0])
    return quat_from_axis_angle(axis, gain * math.acos(cos_ang))


def yaw_correction(q: Quaternion, mag, gain: float) -> Quaternion | None:
    """World-frame yaw rotation aligning the horizontal field with +x."""
    m = _unit(mag)
    if m is None:
        return None
    mw = rotate(q, m)
    if math.hypot(mw[0], mw[1]) < 1e-9:
        return None
    psi = math.atan2(mw[1], mw[0])
    return quat_from_axis_angle((0.0, 0.0, 1.0), -gain * psi)


def attitude_update(state: AttitudeState, sample: ImuSample, dt: float) -> AttitudeState:
    if not dt > 0:
        raise InvalidArgumentError(f"dt must be > 0, got {dt!r}")
    # first-order quaternion kinematics with body-frame rates
    q = quat_mul(state.q, quat_from_rotvec(np.asarray(sample.gyro, dtype=float) * dt))
    q = q.normalized()

    acc_skipped = mag_skipped = False
    if state.gain_acc > 0.0:
        dq = tilt_correction(q, sample.acc, state.gain_acc)
        if dq is None:
            acc_skipped = True
        else:
            q = quat_mul(dq, q)
    if state.gain_mag > 0.0:
        dq = yaw_correction(q, sample.mag, state.gain_mag)
        if dq is None:
            mag_skipped = True
        else:
            q = quat_mul(dq, q)
    if q.w < 0:
        q = Quaternion(-q.w, -q.x, -q.y, -q.z)
    return replace(state, q=q.normalized(), acc_skipped=acc_skipped, mag_skipped=mag_skipped)


def initial_attitude(sample: ImuSample) -> Quaternion:
    """Attitude solved directly from one accelerometer/magnetometer pair."""
    q = IDENTITY
    dq = tilt_correction(q, sample.acc, 1.0)
    if dq is not None:
        q = quat_mul(dq, q).normalized()
    dq = yaw_correction(q, sample.mag, 1.0)
    if dq is not None:
        q = quat_mul(dq, q).normalized()
    return q


class OrientationFilter:
    """Stateful wrapper: feeds timestamped samples and tracks the last time."""

    def __init__(self, gain_acc: float = 0.01, gain_mag: float = 0.01,
                 init_from_first: bool = True):
        self.state = AttitudeState(gain_acc=gain_acc, gain_mag=gain_mag)
        self.t: float | None = None
        self.init_from_first = init_from_first

    def update(self, sample: ImuSample) -> float:
        """Consume a sample and return the current heading."""
        if self.t is None:
            if self.init_from_first:
                self.state = replace(self.state, q=initial_attitude(sample))
            self.t = sample.t
        else:
            dt = sample.t - self.t
            self.state = attitude_update(self.state, sample, dt)
            self.t = sample.t
        return heading_from_quaternion(self.state.q)

    @property
    def heading(self) -> float:
        return heading_from_quaternion(self.state.q)
