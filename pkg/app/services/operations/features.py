# app/services/operations/features.py
"""Feature views: which columns and which patients each model sees."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Literal, Tuple

import numpy as np

from ..core.config import log
from ..core.constants import BASELINE_PREFIX, DELTA_ZERO, FU1_PREFIX
from ..core.errors import PipelineError
from ..data.tabular import Cohort


@dataclass(frozen=True, eq=False)
class FeatureView:
    """Raw (un-normalized) feature matrix over all cohort rows plus the eligible row mask.

    Rows outside ``eligible`` may hold NaN and are never used.
    """

    X: np.ndarray
    feature_names: Tuple[str, ...]
    eligible: np.ndarray
    flags: Dict[str, object] = field(default_factory=dict)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def n_eligible(self) -> int:
        return int(self.eligible.sum())


def _with_covariates(
        cohort: Cohort,
        block: np.ndarray,
        names: Tuple[str, ...],
        target: Literal["y1", "y2"],
        include_covariates: bool,
) -> Tuple[np.ndarray, Tuple[str, ...]]:
    if not include_covariates:
        return block, names
    cov, cov_names = cohort.covariates_for(target)
    return np.hstack([block, cov]), names + cov_names


def baseline_view(cohort: Cohort, target: Literal["y1", "y2"], include_covariates: bool = False) -> FeatureView:
    X, names = _with_covariates(
        cohort, np.asarray(cohort.baseline), cohort.feature_names_baseline, target, include_covariates
    )
    return FeatureView(X=X, feature_names=names, eligible=np.ones(cohort.n_patients, dtype=bool))


def empty_view(cohort: Cohort, include_covariates: bool = False) -> FeatureView:
    """No normalized features (the label-only model); covariates optional."""
    X, names = _with_covariates(cohort, np.zeros((cohort.n_patients, 0)), (), "y2", include_covariates)
    return FeatureView(X=X, feature_names=names, eligible=np.ones(cohort.n_patients, dtype=bool))


def _require_fu1(cohort: Cohort, model: str) -> np.ndarray:
    if not cohort.feature_names_fu1:
        raise PipelineError(f"{model} requires fu1_ feature columns, none present in the cohort")
    mask = cohort.has_fu1
    if mask.sum() < 2:
        raise PipelineError(f"{model} requires patients with fu1 features, found {int(mask.sum())}")
    return mask


def fu1_view(cohort: Cohort, include_covariates: bool = False) -> FeatureView:
    mask = _require_fu1(cohort, "radiomics_fu1")
    X, names = _with_covariates(
        cohort, np.asarray(cohort.fu1), cohort.feature_names_fu1, "y2", include_covariates
    )
    log.debug(f"fu1 view: {int(mask.sum())}/{cohort.n_patients} eligible patients")
    return FeatureView(X=X, feature_names=names, eligible=mask)


def paired_features(cohort: Cohort, base_prefix: str = BASELINE_PREFIX, fu1_prefix: str = FU1_PREFIX) -> Tuple[Tuple[int, int, str], ...]:
    """(baseline column, fu1 column, suffix) triples sharing a name suffix."""
    fu1_index = {
        name[len(fu1_prefix):]: j for j, name in enumerate(cohort.feature_names_fu1) if name.startswith(fu1_prefix)
    }
    pairs = []
    for i, name in enumerate(cohort.feature_names_baseline):
        suffix = name[len(base_prefix):] if name.startswith(base_prefix) else name
        if suffix in fu1_index:
            pairs.append((i, fu1_index[suffix], suffix))
    return tuple(pairs)


def delta_view(cohort: Cohort, include_covariates: bool = False) -> FeatureView:
    """Relative change (fu1 - base) / base per paired feature.

    Where |base| < DELTA_ZERO the absolute change fu1 - base is used instead;
    the number of such cells per feature is recorded in ``flags``.
    """
    mask = _require_fu1(cohort, "delta")
    pairs = paired_features(cohort)
    if not pairs:
        raise PipelineError("delta requires base_/fu1_ columns with matching suffixes")
    base = cohort.baseline[:, [p[0] for p in pairs]]
    fu1 = cohort.fu1[:, [p[1] for p in pairs]]
    zero = np.abs(base) < DELTA_ZERO
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = np.where(zero, fu1 - base, (fu1 - base) / np.where(zero, 1.0, base))

    fallback = {
        f"delta_{suffix}": int((zero[:, j] & mask).sum())
        for j, (_, _, suffix) in enumerate(pairs)
        if (zero[:, j] & mask).any()
    }
    if fallback:
        log.warning(f"Delta features fell back to absolute change for |base| < {DELTA_ZERO}: {fallback}")
    X, names = _with_covariates(
        cohort, delta, tuple(f"delta_{p[2]}" for p in pairs), "y2", include_covariates
    )
    return FeatureView(X=X, feature_names=names, eligible=mask, flags={"delta_absolute_fallback": fallback})
