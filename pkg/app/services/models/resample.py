# app/services/models/resample.py
from __future__ import annotations

from typing import Literal, Tuple

import numpy as np
from imblearn.over_sampling import SMOTE
from pydantic import BaseModel, ConfigDict, Field

from ..core.config import log
from ..core.constants import SMOTE_K
from ..core.errors import ResampleError
from ..core.utils import as_binary_vector, as_matrix, round_half_up


class ImbalanceStrategy(BaseModel):
    """How a training fold compensates for class imbalance."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["none", "inverse_frequency", "smote"] = "none"
    smote_k: int = Field(SMOTE_K, ge=1)
    smote_target_ratio: float = Field(1.0, gt=0.0)
    seed: int = 0


def inverse_frequency_weights(y: np.ndarray) -> np.ndarray:
    """s_i = n / (2 * n_class(y_i)); the weights sum to n."""
    y = as_binary_vector(y)
    n = y.shape[0]
    counts = np.bincount(y, minlength=2)
    if (counts == 0).any():
        raise ResampleError("inverse_frequency_weights needs both classes present; use kind='none'")
    per_class = n / (2.0 * counts)
    return per_class[y]


def smote_oversample(
        X: np.ndarray,
        y: np.ndarray,
        strategy: ImbalanceStrategy,
) -> Tuple[np.ndarray, np.ndarray]:
    """Append SMOTE rows for the minority class; original rows stay first and unchanged.

    The neighbour count is truncated to ``minority_count - 1`` and the minority
    class is grown to ``round(target_ratio * majority_count)``.
    """
    X = as_matrix(X)
    y = as_binary_vector(y)
    if X.shape[0] != y.shape[0]:
        raise ResampleError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")

    counts = np.bincount(y, minlength=2)
    minority = int(np.argmin(counts))
    n_min, n_maj = int(counts[minority]), int(counts[1 - minority])
    if n_min < 2:
        log.error(f"SMOTE needs >= 2 minority rows, got {n_min}")
        raise ResampleError(f"SMOTE needs at least 2 minority rows (class {minority} has {n_min})")

    target = round_half_up(strategy.smote_target_ratio * n_maj)
    if target <= n_min:
        log.debug(f"SMOTE skipped: minority {n_min} already >= target {target}")
        return X, y

    k_eff = min(strategy.smote_k, n_min - 1)
    sampler = SMOTE(
        sampling_strategy={minority: target},
        k_neighbors=k_eff,
        random_state=strategy.seed,
    )
    X_res, y_res = sampler.fit_resample(X, y)
    log.debug(f"SMOTE: class {minority} {n_min} -> {target} rows (k={k_eff}), majority {n_maj}")
    return np.asarray(X_res, dtype=np.float64), np.asarray(y_res, dtype=np.int64)


def rebalance(
        X: np.ndarray,
        y: np.ndarray,
        strategy: ImbalanceStrategy,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Apply ``strategy`` to a training fold, returning (X, y, sample_weights).

    A single-class fold is passed through with unit weights so the classifier
    can produce its degenerate constant model.
    """
    y = as_binary_vector(y)
    if strategy.kind == "none" or np.unique(y).size < 2:
        if strategy.kind != "none":
            log.warning(f"Single-class training fold: {strategy.kind} skipped")
        return as_matrix(X), y, np.ones(y.shape[0])
    if strategy.kind == "inverse_frequency":
        return as_matrix(X), y, inverse_frequency_weights(y)
    X_res, y_res = smote_oversample(X, y, strategy)
    return X_res, y_res, np.ones(y_res.shape[0])
