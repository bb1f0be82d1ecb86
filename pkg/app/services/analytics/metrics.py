# app/services/analytics/metrics.py
"""Skill scores, across-split confidence intervals and the PCA overview projection."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Dict, Literal, Sequence

import numpy as np
from scipy.stats import rankdata

from ..core.config import log
from ..core.constants import CI_Z, METRICS
from ..core.utils import as_binary_vector, as_matrix

# Relative eigenvalue below which a principal component is treated as absent
_RANK_TOL = 1e-10


# ---------------------------------------------------------------------------
# --- Types -----------------------------------------------------------------
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SkillScores:
    """Test-set scores of one evaluation; an undefined rate is NaN."""

    accuracy: float
    balanced_accuracy: float
    recall: float
    specificity: float
    roc_auc: float
    n: int

    def as_dict(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in METRICS}


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    ci_low: float
    ci_high: float
    n_valid: int


@dataclass(frozen=True)
class ScoreSummary:
    metrics: Dict[str, MetricSummary]
    n_splits: int
    method: Literal["normal", "pooled"] = "normal"

    def __getitem__(self, metric: str) -> MetricSummary:
        return self.metrics[metric]

    def as_dict(self) -> Dict[str, object]:
        return {
            "n_splits": self.n_splits,
            "method": self.method,
            "metrics": {name: asdict(m) for name, m in self.metrics.items()},
        }


@dataclass(frozen=True, eq=False)
class PcaResult:
    projection: np.ndarray
    explained_variance: np.ndarray
    components: np.ndarray
    total_variance: float

    @property
    def explained_variance_ratio(self) -> np.ndarray:
        if self.total_variance <= 0:
            return np.zeros_like(self.explained_variance)
        return self.explained_variance / self.total_variance


# ---------------------------------------------------------------------------
# --- Per-split scores ------------------------------------------------------
# ---------------------------------------------------------------------------

def roc_auc(y_true: np.ndarray, proba: np.ndarray) -> float:
    """Mann-Whitney AUC with half credit for ties; NaN if a class is missing."""
    y = as_binary_vector(y_true, "y_true")
    proba = np.asarray(proba, dtype=np.float64)
    n_pos = int(y.sum())
    n_neg = y.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(proba, method="average")
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _rate(num: int, den: int) -> float:
    return num / den if den else float("nan")


def skill_scores(y_true: np.ndarray, y_pred: np.ndarray, proba: np.ndarray) -> SkillScores:
    y_true = as_binary_vector(y_true, "y_true")
    y_pred = as_binary_vector(y_pred, "y_pred")
    proba = np.asarray(proba, dtype=np.float64).ravel()
    if not (y_true.shape == y_pred.shape == proba.shape):
        raise ValueError(
            f"Length mismatch: y_true={y_true.shape[0]}, y_pred={y_pred.shape[0]}, proba={proba.shape[0]}"
        )
    if y_true.size == 0:
        raise ValueError("skill_scores needs at least one sample")

    tn, fp, fn, tp = (int(c) for c in np.bincount(2 * y_true + y_pred, minlength=4))
    recall = _rate(tp, tp + fn)
    specificity = _rate(tn, tn + fp)
    return SkillScores(
        accuracy=(tp + tn) / int(y_true.size),
        balanced_accuracy=(recall + specificity) / 2,
        recall=recall,
        specificity=specificity,
        roc_auc=roc_auc(y_true, proba),
        n=int(y_true.size),
    )


def mean_scores(scores: Sequence[SkillScores]) -> SkillScores:
    """Metric-wise mean of several evaluations, skipping undefined values."""
    if not scores:
        raise ValueError("mean_scores needs at least one score set")
    values = {}
    for f in fields(SkillScores):
        if f.name == "n":
            continue
        arr = np.array([getattr(s, f.name) for s in scores], dtype=np.float64)
        values[f.name] = float(arr[~np.isnan(arr)].mean()) if (~np.isnan(arr)).any() else float("nan")
    return SkillScores(**values, n=scores[0].n)


# ---------------------------------------------------------------------------
# --- Across splits ---------------------------------------------------------
# ---------------------------------------------------------------------------

def summarize_across_splits(per_split: Sequence[SkillScores]) -> ScoreSummary:
    """Mean and normal-approximation 95% CI per metric (sd with m - 1 denominator).

    A metric that is undefined in a split is left out of that metric's
    average only.
    """
    summaries = {}
    for name in METRICS:
        arr = np.array([getattr(s, name) for s in per_split], dtype=np.float64)
        valid = arr[~np.isnan(arr)]
        m = valid.size
        if m < 2:
            log.error(f"Metric {name} has {m} valid split(s); at least 2 required")
            raise ValueError(f"Cannot summarize {name!r}: only {m} valid split(s)")
        if m < arr.size:
            log.warning(f"Metric {name} undefined in {arr.size - m}/{arr.size} split(s); excluded")
        mean = float(valid.mean())
        half = CI_Z * float(np.std(valid, ddof=1)) / np.sqrt(m)
        summaries[name] = MetricSummary(mean=mean, ci_low=mean - half, ci_high=mean + half, n_valid=m)
    return ScoreSummary(metrics=summaries, n_splits=len(per_split))


def pooled_summary(scores: SkillScores, n_splits: int) -> ScoreSummary:
    """Summary of a single pooled evaluation (leave-one-out mode); no interval."""
    summaries = {}
    for name in METRICS:
        value = float(getattr(scores, name))
        summaries[name] = MetricSummary(mean=value, ci_low=value, ci_high=value, n_valid=0 if np.isnan(value) else 1)
    return ScoreSummary(metrics=summaries, n_splits=n_splits, method="pooled")


# ---------------------------------------------------------------------------
# --- PCA -------------------------------------------------------------------
# ---------------------------------------------------------------------------

def pca_project(X: np.ndarray, n_components: int = 2) -> PcaResult:
    """Project mean-centred rows onto the top principal axes of the sample covariance.

    Each axis is signed so that its largest-magnitude loading is positive.
    Components beyond the data's rank are returned as zeros.
    """
    X = as_matrix(X)
    n, d = X.shape
    if n < 3 or d < 2:
        raise ValueError(f"pca_project needs n >= 3 and d >= 2, got n={n}, d={d}")
    if not 1 <= n_components <= d:
        raise ValueError(f"n_components must lie in [1, {d}]")

    centred = X - X.mean(axis=0)
    cov = centred.T @ centred / (n - 1)
    eigval, eigvec = np.linalg.eigh(cov)
    order = np.argsort(eigval)[::-1][:n_components]
    eigval = np.clip(eigval[order], 0.0, None)
    eigvec = eigvec[:, order]

    top = eigval[0] if eigval[0] > 0 else 1.0
    for c in range(n_components):
        if eigval[c] <= _RANK_TOL * top:
            eigval[c] = 0.0
            eigvec[:, c] = 0.0
            continue
        lead = int(np.argmax(np.abs(eigvec[:, c])))
        if eigvec[lead, c] < 0:
            eigvec[:, c] = -eigvec[:, c]

    return PcaResult(
        projection=centred @ eigvec,
        explained_variance=eigval,
        components=eigvec.T,
        total_variance=float(np.trace(cov)),
    )
