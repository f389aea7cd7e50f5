"""Constant range-rate Kalman filter smoothing the raw UWB range stream."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .core import InvalidArgumentError, RangeSample


@dataclass(frozen=True)
class RangeFilterState:
    r_hat: float
    rdot_hat: float
    P: np.ndarray = field(repr=False)
    t: float | None = None
    outliers: int = 0
    streak: int = 0  # consecutive gated samples
    last_nis: float | None = None  # normalised innovation squared of the last update


def range_init(sample: RangeSample, sigma_r: float = 0.2,
               sigma_rate: float = 2.0) -> RangeFilterState:
    P = np.diag([max(sigma_r, 1e-6) ** 2, sigma_rate ** 2])
    return RangeFilterState(max(sample.r, 0.0), 0.0, P, sample.t)


def range_predict(state: RangeFilterState, dt: float,
                  rate_noise: float = 0.5) -> RangeFilterState:
    """Propagate ``dt`` seconds; ``rate_noise`` is the rate random walk [m/s/sqrt(s)]."""
    if not dt > 0:
        raise InvalidArgumentError(f"dt must be > 0, got {dt!r}")
    F = np.array([[1.0, dt], [0.0, 1.0]])
    q = rate_noise ** 2
    Q = q * np.array([[dt ** 3 / 3.0, dt ** 2 / 2.0], [dt ** 2 / 2.0, dt]])
    P = F @ state.P @ F.T + Q
    t = None if state.t is None else state.t + dt
    r_hat = max(state.r_hat + state.rdot_hat * dt, 0.0)
    return replace(state, r_hat=r_hat, P=0.5 * (P + P.T), t=t)


MAX_GATED_STREAK = 3


def range_update(state: RangeFilterState, sample: RangeSample, sigma_r: float = 0.2,
                 gate_sigma: float = 5.0, sigma_rate: float = 2.0) -> RangeFilterState:
    """Scalar measurement update with an innovation gate.

    Samples further than ``gate_sigma`` innovation standard deviations from
    the prediction leave the estimate untouched and bump ``outliers``. After
    ``MAX_GATED_STREAK`` consecutive rejections the filter assumes it lost
    track (e.g. the range rate changed in a turn) and restarts on the sample.
    """
    if not sample.r >= 0:
        raise InvalidArgumentError("range must be >= 0")
    P = state.P
    innov = sample.r - state.r_hat
    S = P[0, 0] + sigma_r ** 2
    if S <= 0.0:
        return replace(state, r_hat=sample.r, t=sample.t)
    nis = innov * innov / S
    if gate_sigma is not None and nis > gate_sigma ** 2:
        if state.streak + 1 >= MAX_GATED_STREAK:
            fresh = range_init(sample, sigma_r, sigma_rate)
            return replace(fresh, outliers=state.outliers, last_nis=nis)
        return replace(state, outliers=state.outliers + 1, streak=state.streak + 1,
                       t=sample.t, last_nis=nis)
    K = P[:, 0] / S
    r_hat = state.r_hat + K[0] * innov
    rdot = state.rdot_hat + K[1] * innov
    # Joseph form keeps P symmetric PSD
    IKH = np.eye(2) - np.outer(K, [1.0, 0.0])
    P = IKH @ P @ IKH.T + np.outer(K, K) * sigma_r ** 2
    return replace(state, r_hat=max(r_hat, 0.0), rdot_hat=rdot, P=0.5 * (P + P.T),
                   t=sample.t, streak=0, last_nis=nis)


class RangeSmoother:
    """Stateful convenience wrapper used by the pipeline."""

    def __init__(self, sigma_r: float = 0.2, rate_noise: float = 0.5,
                 gate_sigma: float = 5.0, init_sigma_rate: float = 2.0):
        self.sigma_r = sigma_r
        self.rate_noise = rate_noise
        self.gate_sigma = gate_sigma
        self.init_sigma_rate = init_sigma_rate
        self.state: RangeFilterState | None = None

    def step(self, sample: RangeSample) -> float:
        """Predict to the sample time, update, and return the smoothed range."""
        if self.state is None:
            self.state = range_init(sample, self.sigma_r, self.init_sigma_rate)
            return self.state.r_hat
        dt = sample.t - self.state.t
        if dt > 0:
            self.state = range_predict(self.state, dt, self.rate_noise)
        elif dt < 0:
            raise InvalidArgumentError("range samples must be time-ordered")
        self.state = range_update(self.state, sample, self.sigma_r, self.gate_sigma,
                                  self.init_sigma_rate)
        return self.state.r_hat

    @property
    def outliers(self) -> int:
        return 0 if self.state is None else self.state.outliers
