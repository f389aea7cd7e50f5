"""Five-state EKF over unicycle kinematics with range and heading updates.

State ``[x, y, theta, v, w]``; the model is

    x' = v cos(theta),  y' = v sin(theta),  theta' = w,  v' = a,  w' = b

discretised with a first-order (Euler) step. The accelerations ``a`` and
``b`` are unknown to the tracker and enter as white process noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import (
    AnchorPose,
    EstimatorConfig,
    InvalidArgumentError,
    ITHETA,
    IV,
    IX,
    IY,
    IW,
    RobotState,
    SingularGeometryError,
    STATE_DIM,
    wrap_angle,
)
from .speed import SpeedEstimate

MIN_RANGE = 1e-6


@dataclass(frozen=True)
class EkfBelief:
    mean: np.ndarray
    P: np.ndarray
    t: float = 0.0

    @property
    def state(self) -> RobotState:
        return RobotState.from_array(self.mean)


def process_model(mean: np.ndarray, dt: float) -> np.ndarray:
    x, y, th, v, w = mean
    out = np.array([x + v * math.cos(th) * dt,
                    y + v * math.sin(th) * dt,
                    th + w * dt,
                    v,
                    w])
    out[ITHETA] = wrap_angle(out[ITHETA])
    return out


def process_jacobian(mean: np.ndarray, dt: float) -> np.ndarray:
    _, _, th, v, _ = mean
    c, s = math.cos(th), math.sin(th)
    F = np.eye(STATE_DIM)
    F[IX, ITHETA] = -v * s * dt
    F[IX, IV] = c * dt
    F[IY, ITHETA] = v * c * dt
    F[IY, IV] = s * dt
    F[ITHETA, IW] = dt
    return F


def process_noise(mean: np.ndarray, dt: float, sigma_a: float, sigma_b: float) -> np.ndarray:
    """Accelerations as white noise of spectral density sigma_a**2, sigma_b**2."""
    th = mean[ITHETA]
    G = np.zeros((STATE_DIM, 2))
    G[IX, 0] = 0.5 * dt * dt * math.cos(th)
    G[IY, 0] = 0.5 * dt * dt * math.sin(th)
    G[ITHETA, 1] = 0.5 * dt * dt
    G[IV, 0] = dt
    G[IW, 1] = dt
    return (G * np.array([sigma_a ** 2, sigma_b ** 2])) @ G.T / dt


def ekf_predict(belief: EkfBelief, dt: float, sigma_a: float = 0.5,
                sigma_b: float = 1.0) -> EkfBelief:
    if not dt > 0:
        raise InvalidArgumentError(f"dt must be > 0, got {dt!r}")
    F = process_jacobian(belief.mean, dt)
    P = F @ belief.P @ F.T + process_noise(belief.mean, dt, sigma_a, sigma_b)
    return EkfBelief(process_model(belief.mean, dt), 0.5 * (P + P.T), belief.t + dt)


def range_model(mean: np.ndarray, anchor: AnchorPose = AnchorPose()) -> float:
    return math.hypot(mean[IX] - anchor[0], mean[IY] - anchor[1])


def range_jacobian(mean: np.ndarray, anchor: AnchorPose = AnchorPose()) -> np.ndarray:
    d = range_model(mean, anchor)
    if d < MIN_RANGE:
        raise SingularGeometryError(f"predicted range {d:.3g} m is too close to the anchor")
    H = np.zeros(STATE_DIM)
    H[IX] = (mean[IX] - anchor[0]) / d
    H[IY] = (mean[IY] - anchor[1]) / d
    return H


def _scalar_update(belief: EkfBelief, innov: float, H: np.ndarray, R: float) -> EkfBelief:
    P = belief.P
    PH = P @ H
    S = float(H @ PH) + R
    if S <= 0.0:
        return belief
    K = PH / S
    mean = belief.mean + K * innov
    mean[ITHETA] = wrap_angle(mean[ITHETA])
    IKH = np.eye(STATE_DIM) - np.outer(K, H)
    P = IKH @ P @ IKH.T + R * np.outer(K, K)
    return replace(belief, mean=mean, P=0.5 * (P + P.T))


def ekf_update_range(belief: EkfBelief, r: float, anchor: AnchorPose = AnchorPose(),
                     sigma_r: float = 0.2) -> EkfBelief:
    H = range_jacobian(belief.mean, anchor)
    innov = r - range_model(belief.mean, anchor)
    return _scalar_update(belief, innov, H, sigma_r ** 2)


def ekf_update_heading(belief: EkfBelief, theta_meas: float,
                       sigma_theta: float = 0.1) -> EkfBelief:
    H = np.zeros(STATE_DIM)
    H[ITHETA] = 1.0
    innov = wrap_angle(theta_meas - belief.mean[ITHETA])
    return _scalar_update(belief, innov, H, sigma_theta ** 2)


def ekf_blend_speed(belief: EkfBelief, est: SpeedEstimate, blend_w: float = 0.5,
                    variance_weighted: bool = False) -> EkfBelief:
    """Pull the speed state toward an externally estimated speed.

    The fixed-weight form edits the mean as ``w * v + (1 - w) * v_est``; the
    speed variance is raised to at least ``var_est * (1 - w)**2`` and its
    cross-covariances shrink by ``w``. With ``variance_weighted`` the blend is
    a scalar Kalman update on ``v`` using ``est.var_v``.
    """
    if not 0.0 <= blend_w <= 1.0:
        raise InvalidArgumentError("blend_w must lie in [0, 1]")
    if not est.v >= 0.0:
        raise InvalidArgumentError("estimated speed must be >= 0")
    if variance_weighted and math.isfinite(est.var_v) and est.var_v > 0.0:
        H = np.zeros(STATE_DIM)
        H[IV] = 1.0
        return _scalar_update(belief, est.v - belief.mean[IV], H, est.var_v)
    if blend_w == 1.0:
        return belief

    mean = belief.mean.copy()
    mean[IV] = blend_w * mean[IV] + (1.0 - blend_w) * est.v
    P = belief.P.copy()
    pvv = P[IV, IV]
    P[IV, :] *= blend_w
    P[:, IV] *= blend_w
    floor = est.var_v * (1.0 - blend_w) ** 2
    P[IV, IV] = max(pvv, floor) if math.isfinite(floor) else pvv
    return replace(belief, mean=mean, P=P)


def initial_belief(first_range: float, first_heading: float, t: float,
                   cfg: EstimatorConfig | None = None,
                   anchor: AnchorPose = AnchorPose()) -> EkfBelief:
    """Deliberately weak prior: on the anchor-frame x-axis at the first range."""
    cfg = cfg or EstimatorConfig()
    mean = np.array([anchor[0] + first_range, anchor[1], wrap_angle(first_heading), 0.0, 0.0])
    sp = max(first_range / 2.0, 0.1)
    P = np.diag([sp ** 2, sp ** 2, cfg.init_sigma_theta ** 2,
                 cfg.init_sigma_v ** 2, cfg.init_sigma_w ** 2])
    return EkfBelief(mean, P, t)
