"""Split conformal prediction, CQR, coverage, calibration bins, Brier score.

The calibration set must be disjoint from the data the model was trained
on; that is the caller's contract. All guarantees are marginal: the
intervals cover the truth with the nominal probability on average over
exchangeable data, not conditionally on any input region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import ScoredDataset
from .errors import (
    InsufficientCalibration,
    LengthMismatch,
    MissingQuantileColumns,
    ModeMismatch,
    RangeError,
)


@dataclass(frozen=True)
class ConformalCalibration:
    alpha: float
    q_hat: float
    n_calibration: int
    mode: str  # absolute_residual | cqr


@dataclass(frozen=True)
class ReliabilityBin:
    lower: float
    upper: float
    count: int
    mean_predicted: float | None
    observed_rate: float | None


@dataclass(frozen=True)
class ReliabilityTable:
    bins: list[ReliabilityBin]


def _calibration_rank(n: int, alpha: float) -> int:
    """Guarantee-preserving rank k = ceil((n+1)(1-alpha)), 1-indexed.

    The tiny nudge keeps float products like 10*0.9 = 9.000000000000002
    from rounding the rank up.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    k = math.ceil((n + 1) * (1 - alpha) - 1e-9)
    if k > n:
        raise InsufficientCalibration(n, k)
    return max(k, 1)


def _fit(scores: np.ndarray, alpha: float, mode: str) -> ConformalCalibration:
    n = scores.size
    k = _calibration_rank(n, alpha)
    q_hat = float(np.sort(scores)[k - 1])
    return ConformalCalibration(alpha=alpha, q_hat=q_hat, n_calibration=n, mode=mode)


def conformal_fit(calibration: ScoredDataset, alpha: float) -> ConformalCalibration:
    """Fit split conformal calibration from absolute residuals.

    q_hat is the k-th smallest |y_true - y_pred| with k = ceil((n+1)(1-alpha));
    too small a calibration set for the requested alpha raises
    InsufficientCalibration.
    """
    scores = np.abs(calibration.y_true - calibration.y_pred)
    return _fit(scores, alpha, "absolute_residual")


def conformal_interval(cal: ConformalCalibration, y_pred) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric interval [y_pred - q_hat, y_pred + q_hat] per prediction."""
    if cal.mode != "absolute_residual":
        raise ModeMismatch(f"conformal_interval needs absolute_residual mode, got {cal.mode}")
    y_pred = np.asarray(y_pred, dtype=np.float64)
    return y_pred - cal.q_hat, y_pred + cal.q_hat


def cqr_fit(calibration: ScoredDataset, alpha: float) -> ConformalCalibration:
    """Conformalized quantile regression calibration.

    Conformity score max(lower - y, y - upper); q_hat may be negative, in
    which case the model's quantile band is tightened.
    """
    if calibration.y_pred_lower is None or calibration.y_pred_upper is None:
        raise MissingQuantileColumns("cqr_fit needs y_pred_lower and y_pred_upper")
    y = calibration.y_true
    scores = np.maximum(calibration.y_pred_lower - y, y - calibration.y_pred_upper)
    return _fit(scores, alpha, "cqr")


def cqr_interval(
    cal: ConformalCalibration, y_pred_lower, y_pred_upper
) -> tuple[np.ndarray, np.ndarray]:
    """CQR interval [lower - q_hat, upper + q_hat] per prediction."""
    if cal.mode != "cqr":
        raise ModeMismatch(f"cqr_interval needs cqr mode, got {cal.mode}")
    lower = np.asarray(y_pred_lower, dtype=np.float64)
    upper = np.asarray(y_pred_upper, dtype=np.float64)
    return lower - cal.q_hat, upper + cal.q_hat


def empirical_coverage(intervals, y_true) -> float:
    """Fraction of rows whose truth lies inside [lower, upper]."""
    arr = np.asarray(intervals, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("intervals must be a sequence of (lower, upper) pairs")
    y = np.asarray(y_true, dtype=np.float64)
    if arr.shape[0] != y.size:
        raise LengthMismatch(f"{arr.shape[0]} intervals vs {y.size} outcomes")
    return float(np.mean((arr[:, 0] <= y) & (y <= arr[:, 1])))


def brier_score(probabilities, outcomes) -> float:
    """Mean squared difference between predicted probabilities and outcomes."""
    p = np.asarray(probabilities, dtype=np.float64)
    o = np.asarray(outcomes, dtype=np.float64)
    if p.size != o.size:
        raise LengthMismatch(f"{p.size} probabilities vs {o.size} outcomes")
    if np.any((p < 0) | (p > 1)):
        raise RangeError("probabilities must lie in [0, 1]")
    if not np.all(np.isin(o, (0.0, 1.0))):
        raise RangeError("outcomes must be 0 or 1")
    return float(np.mean((p - o) ** 2))


def reliability_table(probabilities, outcomes, n_bins: int = 10) -> ReliabilityTable:
    """Calibration bins: mean predicted probability vs observed rate.

    Bins partition [0, 1] with equal widths, right-open except the last.
    Empty bins are reported with count 0 and absent rates rather than
    dropped.
    """
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    p = np.asarray(probabilities, dtype=np.float64)
    o = np.asarray(outcomes, dtype=np.float64)
    if p.size != o.size:
        raise LengthMismatch(f"{p.size} probabilities vs {o.size} outcomes")
    if p.size and np.any((p < 0) | (p > 1)):
        raise RangeError("probabilities must lie in [0, 1]")
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    idx = np.minimum((p * n_bins).astype(int), n_bins - 1)
    bins = []
    for b in range(n_bins):
        in_bin = idx == b
        count = int(in_bin.sum())
        bins.append(
            ReliabilityBin(
                lower=float(edges[b]),
                upper=float(edges[b + 1]),
                count=count,
                mean_predicted=float(p[in_bin].mean()) if count else None,
                observed_rate=float(o[in_bin].mean()) if count else None,
            )
        )
    return ReliabilityTable(bins)
