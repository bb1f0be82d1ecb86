# app/services/operations/validation.py
"""Dry-run checks of an experiment configuration; nothing is trained."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import TYPE_CHECKING, List, Literal

import numpy as np
from scipy.stats import binom

from .experiment import load_dataset
from .features import paired_features
from .pipeline import FU1_MODELS, LONGITUDINAL_MODES
from ..core.config import log
from ..core.errors import LongitError
from ..core.utils import round_half_up

if TYPE_CHECKING:
    from ...cli.models import ExperimentConfig


@dataclass(frozen=True)
class Diagnostic:
    level: Literal["fatal", "warning", "info"]
    code: str
    message: str

    def as_dict(self) -> dict:
        return asdict(self)


def _plan_feasibility(strata_sizes: dict, n_splits: int, test_fraction: float, min_occ: int, retries: int) -> float:
    """Probability that every retry of the split plan misses min_occurrences.

    Split memberships are treated as independent Bernoulli draws with the
    stratum's test share, which is a close approximation for sampling without
    replacement within each split.
    """
    log_ok = 0.0
    for n_s in strata_sizes.values():
        n_test = min(max(round_half_up(test_fraction * n_s), 1), n_s - 1)
        p_short = float(binom.cdf(min_occ - 1, n_splits, n_test / n_s))
        if p_short >= 1.0:
            return 1.0
        log_ok += n_s * np.log1p(-p_short)
    p_plan_ok = float(np.exp(log_ok))
    return (1.0 - p_plan_ok) ** (retries + 1)


def diagnose(config: "ExperimentConfig") -> List[Diagnostic]:
    """Schema, stratum-size, feasibility and roster checks for ``config``."""
    out: List[Diagnostic] = []
    try:
        cohort = load_dataset(config)
    except (LongitError, OSError) as e:
        return [Diagnostic("fatal", "cohort_invalid", f"{type(e).__name__}: {e}")]
    out.append(Diagnostic(
        "info", "cohort",
        f"{cohort.n_patients} patients, {cohort.n_features} baseline features, "
        f"{int(cohort.has_fu1.sum())} with fu1, covariates={list(cohort.covariate_names)}",
    ))

    counts = np.bincount(cohort.strata, minlength=4)
    sizes = {}
    for code, n_s in enumerate(counts):
        cell = f"(y1={code // 2}, y2={code % 2})"
        if n_s == 1:
            out.append(Diagnostic("fatal", "stratum_too_small", f"stratum {cell} has 1 patient; at least 2 required"))
        elif n_s == 0:
            out.append(Diagnostic("info", "stratum_empty", f"stratum {cell} is empty"))
        else:
            sizes[cell] = int(n_s)

    if config.evaluation == "splits" and not any(d.code == "stratum_too_small" for d in out):
        n_splits = config.resolved_n_splits
        if n_splits < config.min_occurrences:
            out.append(Diagnostic(
                "fatal", "min_occurrences_unsatisfiable",
                f"n_splits={n_splits} < min_occurrences={config.min_occurrences}",
            ))
        else:
            p_fail = _plan_feasibility(sizes, n_splits, config.test_fraction, config.min_occurrences, config.max_retries)
            level = "fatal" if p_fail > 0.5 else "warning" if p_fail > 1e-3 else "info"
            out.append(Diagnostic(
                level, "min_occurrences_feasibility",
                f"estimated probability that all {config.max_retries + 1} split-plan attempts fail: {p_fail:.3g}",
            ))

    specs = config.resolved_models()
    for spec in specs:
        if spec.name in FU1_MODELS:
            if not cohort.feature_names_fu1 or cohort.has_fu1.sum() < 2:
                out.append(Diagnostic("fatal", "fu1_missing", f"{spec.name} requested but the cohort has no fu1 features"))
            elif spec.name == "delta" and not paired_features(cohort):
                out.append(Diagnostic("fatal", "delta_unpaired", "delta requested but no base_/fu1_ columns share a suffix"))
        if spec.include_covariates and not cohort.covariate_names:
            out.append(Diagnostic("warning", "no_covariates", f"{spec.name} includes covariates but the cohort has none"))
        if spec.strategy.kind == "smote":
            y = cohort.y1 if spec.target == "y1" else cohort.y2
            minority = int(np.bincount(y, minlength=2).min())
            if round_half_up(minority * (1 - config.test_fraction)) < 2:
                out.append(Diagnostic(
                    "warning", "smote_minority", f"{spec.name}: about {minority} minority patients; SMOTE may fail on small folds",
                ))
    if any(LONGITUDINAL_MODES.get(s.name) == "sampled" for s in specs) and config.evaluation == "loocv":
        out.append(Diagnostic(
            "info", "loocv_single_occurrence", "leave-one-out records one Step-1 probability per patient; KDEs use the minimum bandwidth",
        ))

    n_fatal = sum(d.level == "fatal" for d in out)
    log.info(f"Validation: {len(out)} diagnostic(s), {n_fatal} fatal")
    return out
