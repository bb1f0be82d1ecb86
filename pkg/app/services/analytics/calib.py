# app/services/analytics/calib.py
# ---------------------------------------------------------------------------
# --- Imports ---------------------------------------------------------------
# ---------------------------------------------------------------------------

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Literal, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.isotonic import IsotonicRegression

from ..core.config import log
from ..core.constants import LOG_LOSS_EPS, RELIABILITY_BINS
from ..core.utils import as_binary_vector


# ---------------------------------------------------------------------------
# --- Types -----------------------------------------------------------------
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class IsotonicMap:
    """Monotone calibration map, linear between knots and clamped outside them."""

    knots_x: np.ndarray
    knots_y: np.ndarray

    def __post_init__(self) -> None:
        if self.knots_x.shape != self.knots_y.shape or self.knots_x.size == 0:
            raise ValueError("IsotonicMap needs matching, non-empty knot vectors")
        if np.any(np.diff(self.knots_x) <= 0):
            raise ValueError("IsotonicMap knots_x must be strictly ascending")
        if np.any(np.diff(self.knots_y) < 0):
            raise ValueError("IsotonicMap knots_y must be non-decreasing")

    def __call__(self, p: np.ndarray) -> np.ndarray:
        return apply_isotonic(self, p)


@dataclass(frozen=True)
class ReliabilityBin:
    mean_predicted: float
    fraction_positive: float
    count: int


@dataclass(frozen=True)
class ReliabilityCurve:
    bins: Tuple[ReliabilityBin, ...]

    @property
    def total(self) -> int:
        return sum(b.count for b in self.bins)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "bin_mean_predicted": [b.mean_predicted for b in self.bins],
                "fraction_positive": [b.fraction_positive for b in self.bins],
                "count": [b.count for b in self.bins],
            }
        )


@dataclass(frozen=True)
class CalibrationRow:
    """Mean and standard deviation of a calibration metric across splits."""

    model: str
    stage: Literal["raw", "isotonic"]
    brier_mean: float
    brier_sd: float
    log_loss_mean: float
    log_loss_sd: float
    n_splits: int


# ---------------------------------------------------------------------------
# --- Scores ----------------------------------------------------------------
# ---------------------------------------------------------------------------

def _paired(p: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    p = np.asarray(p, dtype=np.float64).ravel()
    y = as_binary_vector(np.asarray(y).ravel())
    if p.shape != y.shape:
        raise ValueError(f"Length mismatch: {p.shape[0]} probabilities vs {y.shape[0]} labels")
    if p.size == 0:
        raise ValueError("Need at least one prediction")
    return p, y


def brier_score(p: np.ndarray, y: np.ndarray) -> float:
    """Mean squared difference between probabilities and outcomes."""
    p, y = _paired(p, y)
    if (p < 0).any() or (p > 1).any():
        raise ValueError("Probabilities must lie in [0, 1]")
    return float(np.mean((p - y) ** 2))


def log_loss(p: np.ndarray, y: np.ndarray, eps: float = LOG_LOSS_EPS) -> float:
    p, y = _paired(p, y)
    p = np.clip(p, eps, 1 - eps)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


# ---------------------------------------------------------------------------
# --- Isotonic calibration --------------------------------------------------
# ---------------------------------------------------------------------------

def fit_isotonic(p: np.ndarray, y: np.ndarray) -> IsotonicMap:
    """Least-squares monotone non-decreasing fit of y on p (pool adjacent violators).

    Tied probabilities are pooled before fitting; the knots are the distinct
    probabilities at which the fitted step function changes.
    """
    p, y = _paired(p, y)
    if p.size < 2:
        raise ValueError(f"fit_isotonic needs at least 2 points, got {p.size}")
    iso = IsotonicRegression(increasing=True, out_of_bounds="clip")
    iso.fit(p, y.astype(np.float64))
    knots_x = np.asarray(iso.X_thresholds_, dtype=np.float64)
    knots_y = np.asarray(iso.y_thresholds_, dtype=np.float64)
    knots_x.flags.writeable = False
    knots_y.flags.writeable = False
    return IsotonicMap(knots_x=knots_x, knots_y=knots_y)


def apply_isotonic(iso_map: IsotonicMap, p: np.ndarray) -> np.ndarray:
    return np.interp(np.asarray(p, dtype=np.float64), iso_map.knots_x, iso_map.knots_y)


# ---------------------------------------------------------------------------
# --- Reliability curves ----------------------------------------------------
# ---------------------------------------------------------------------------

def reliability_curve(p: np.ndarray, y: np.ndarray, n_bins: int = RELIABILITY_BINS) -> ReliabilityCurve:
    """Uniform bins over [0, 1], last bin right-closed; empty bins are omitted."""
    if n_bins < 2:
        raise ValueError(f"n_bins must be >= 2, got {n_bins}")
    p, y = _paired(p, y)
    idx = np.minimum((np.clip(p, 0.0, 1.0) * n_bins).astype(np.int64), n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    sum_p = np.bincount(idx, weights=p, minlength=n_bins)
    sum_y = np.bincount(idx, weights=y.astype(np.float64), minlength=n_bins)
    bins = tuple(
        ReliabilityBin(
            mean_predicted=float(sum_p[b] / counts[b]),
            fraction_positive=float(sum_y[b] / counts[b]),
            count=int(counts[b]),
        )
        for b in np.flatnonzero(counts)
    )
    return ReliabilityCurve(bins=bins)


# ---------------------------------------------------------------------------
# --- Across-split table ----------------------------------------------------
# ---------------------------------------------------------------------------

def _mean_sd(values: List[float]) -> Tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    sd = float(np.std(arr, ddof=1)) if arr.size > 1 else float("nan")
    return float(arr.mean()), sd


def calibration_table(folds: Sequence[Tuple[np.ndarray, np.ndarray]], model: str) -> List[CalibrationRow]:
    """Raw and isotonic-calibrated Brier score and log loss, mean and sd across folds.

    The isotonic map of each fold is fitted on that same fold, so the
    calibrated numbers are in-sample.
    """
    if not folds:
        raise ValueError("calibration_table needs at least one fold")
    raw_b, raw_l, iso_b, iso_l = [], [], [], []
    for p, y in folds:
        raw_b.append(brier_score(p, y))
        raw_l.append(log_loss(p, y))
        calibrated = apply_isotonic(fit_isotonic(p, y), p)
        iso_b.append(brier_score(calibrated, y))
        iso_l.append(log_loss(calibrated, y))

    rows = []
    for stage, briers, losses in (("raw", raw_b, raw_l), ("isotonic", iso_b, iso_l)):
        b_mean, b_sd = _mean_sd(briers)
        l_mean, l_sd = _mean_sd(losses)
        rows.append(CalibrationRow(model, stage, b_mean, b_sd, l_mean, l_sd, len(folds)))
    log.info(
        f"Calibration [{model}]: brier raw={rows[0].brier_mean:.4f} iso={rows[1].brier_mean:.4f}; "
        f"log-loss raw={rows[0].log_loss_mean:.4f} iso={rows[1].log_loss_mean:.4f}"
    )
    return rows
