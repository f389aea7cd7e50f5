"""Position error metrics: RMSE against truth, ATE against a reference."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from .core import InvalidArgumentError, PoseTrack
from .simulator import TruthTrack


@dataclass
class ErrorSeries:
    t: np.ndarray
    errors: np.ndarray
    windowed: np.ndarray
    window_t: np.ndarray
    rmse: float
    max: float

    def summary(self) -> dict[str, float]:
        return {"rmse": self.rmse, "max": self.max, "n": int(self.errors.size)}


def _as_arrays(track) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(track, (PoseTrack, TruthTrack)):
        return np.asarray(track.t, dtype=float), np.asarray(track.states[:, :2], dtype=float)
    t, xy = track
    return np.asarray(t, dtype=float), np.asarray(xy, dtype=float).reshape(-1, 2)


def position_errors(est, truth) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample position error, truth linearly interpolated at estimate times.

    Estimate samples outside the truth time span are ignored.
    """
    te, pe = _as_arrays(est)
    tt, pt = _as_arrays(truth)
    if te.size == 0 or tt.size == 0:
        raise InvalidArgumentError("tracks must be non-empty")
    inside = (te >= tt[0]) & (te <= tt[-1])
    if not inside.any():
        raise InvalidArgumentError("estimate and truth do not overlap in time")
    te, pe = te[inside], pe[inside]
    ref = np.column_stack([np.interp(te, tt, pt[:, 0]), np.interp(te, tt, pt[:, 1])])
    return te, np.hypot(*(pe - ref).T)


def rmse(est, truth) -> float:
    _, err = position_errors(est, truth)
    return float(math.sqrt(np.mean(err ** 2)))


def associate(est, ref, tol: float = 0.05) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pair each estimate sample with the nearest reference sample within ``tol``."""
    te, pe = _as_arrays(est)
    tr, pr = _as_arrays(ref)
    if tr.size == 0 or te.size == 0:
        return np.empty(0), np.empty((0, 2)), np.empty((0, 2))
    idx = np.clip(np.searchsorted(tr, te), 1, len(tr) - 1) if len(tr) > 1 else np.zeros(len(te), int)
    if len(tr) > 1:
        left = idx - 1
        pick_left = np.abs(te - tr[left]) <= np.abs(tr[idx] - te)
        idx = np.where(pick_left, left, idx)
    ok = np.abs(tr[idx] - te) <= tol
    return te[ok], pe[ok], pr[idx[ok]]


def rigid_align_2d(src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares rotation R and translation t with ``R @ src + t ~ dst``."""
    mu_s, mu_d = src.mean(axis=0), dst.mean(axis=0)
    H = (src - mu_s).T @ (dst - mu_d)
    U, _, Vt = np.linalg.svd(H)
    D = np.diag([1.0, np.sign(np.linalg.det(Vt.T @ U.T)) or 1.0])
    R = Vt.T @ D @ U.T
    return R, mu_d - R @ mu_s


def ate(est, ref, align: Literal["none", "rigid_2d"] = "none", tol: float = 0.05) -> float:
    _, pe, pr = associate(est, ref, tol)
    if align == "rigid_2d":
        if len(pe) < 3:
            raise InvalidArgumentError("rigid alignment needs at least 3 associated pairs")
        R, t = rigid_align_2d(pe, pr)
        pe = pe @ R.T + t
    elif align != "none":
        raise InvalidArgumentError(f"unknown alignment {align!r}")
    if len(pe) == 0:
        raise InvalidArgumentError("no temporally associated pairs")
    return float(math.sqrt(np.mean(np.sum((pe - pr) ** 2, axis=1))))


def windowed_rmse(est, truth, window: float) -> ErrorSeries:
    """Trailing-window RMSE at every estimate timestamp.

    If the window spans the whole track the series collapses to a single
    value, the global RMSE, stamped at the last sample.
    """
    if not window > 0:
        raise InvalidArgumentError("window must be > 0")
    t, err = position_errors(est, truth)
    sq = np.concatenate([[0.0], np.cumsum(err ** 2)])
    total = float(math.sqrt(sq[-1] / err.size))
    if window >= t[-1] - t[0]:
        return ErrorSeries(t, err, np.array([total]), t[-1:].copy(), total, float(err.max()))
    lo = np.searchsorted(t, t - window, side="right")
    hi = np.arange(1, t.size + 1)
    win = np.sqrt((sq[hi] - sq[lo]) / (hi - lo))
    return ErrorSeries(t, err, win, t.copy(), total, float(err.max()))


def heading_error(est: PoseTrack, truth: TruthTrack) -> float:
    """Mean absolute wrapped heading error."""
    states = truth.interpolate(est.t[(est.t >= truth.t[0]) & (est.t <= truth.t[-1])])
    th_est = est.states[(est.t >= truth.t[0]) & (est.t <= truth.t[-1]), 2]
    d = np.angle(np.exp(1j * (th_est - states[:, 2])))
    return float(np.mean(np.abs(d)))


def summarize(track: PoseTrack, truth: Optional[TruthTrack], window: float = 5.0) -> dict:
    if truth is None:
        return {}
    series = windowed_rmse(track, truth, window)
    return {
        "rmse": series.rmse,
        "ate": ate(track, truth, "none", tol=0.05),
        "max_error": series.max,
        "heading_mae": heading_error(track, truth),
        "n": int(series.errors.size),
    }
