# app/services/operations/pipeline.py
"""Probabilistic longitudinal prediction and its benchmark models.

Step 1 trains a first-follow-up classifier per split and records every test
probability. Step 2 fits a Gaussian KDE per patient over those probabilities
and samples intermediate labels from it. Step 3 trains a second-follow-up
classifier on baseline features plus the TRUE first-follow-up label, then
tests it with the true, the Step-1 predicted, or the sampled labels.
"""

# ---------------------------------------------------------------------------
# --- Imports ---------------------------------------------------------------
# ---------------------------------------------------------------------------

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict
from tqdm import tqdm

from .features import FeatureView, baseline_view, delta_view, empty_view, fu1_view
from ..analytics.calib import (
    CalibrationRow,
    ReliabilityCurve,
    apply_isotonic,
    calibration_table,
    fit_isotonic,
    reliability_curve,
)
from ..analytics.metrics import (
    ScoreSummary,
    SkillScores,
    mean_scores,
    pooled_summary,
    skill_scores,
    summarize_across_splits,
)
from ..core.config import SHOW_PROGRESS, log
from ..core.constants import (
    DEFAULT_C,
    DEFAULT_K_SAMPLES,
    DEFAULT_MAX_ITER,
    DEFAULT_MIN_OCCURRENCES,
    DEFAULT_THRESHOLD,
    DEFAULT_TOL,
    RELIABILITY_BINS,
)
from ..core.errors import PipelineError
from ..core.utils import derive_seed, timeit
from ..data.tabular import Cohort, Normalizer, SplitPlan
from ..models.density import GaussianKde, fit_kde, sample
from ..models.glm import LogisticModel, fit_l1_logistic, predict_proba
from ..models.resample import ImbalanceStrategy, rebalance

# ---------------------------------------------------------------------------
# --- Model roster ----------------------------------------------------------
# ---------------------------------------------------------------------------

ModelName = Literal[
    "baseline_fu1",
    "baseline_fu2",
    "labels_only",
    "radiomics_fu1",
    "delta",
    "longit_true",
    "longit_predicted",
    "longit_gkde",
]
LabelMode = Literal["true", "predicted", "sampled"]

STEP1_MODEL = "baseline_fu1"
BENCHMARK_MODELS: Tuple[str, ...] = ("baseline_fu2", "labels_only", "radiomics_fu1", "delta")
LONGITUDINAL_MODES: Dict[str, LabelMode] = {
    "longit_true": "true",
    "longit_predicted": "predicted",
    "longit_gkde": "sampled",
}
SYNTHETIC_ROSTER: Tuple[str, ...] = (
    "baseline_fu1", "baseline_fu2", "labels_only", "longit_true", "longit_predicted", "longit_gkde",
)
COHORT_ROSTER: Tuple[str, ...] = (
    "baseline_fu1", "baseline_fu2", "labels_only", "radiomics_fu1", "delta",
    "longit_true", "longit_predicted", "longit_gkde",
)
FU1_MODELS: Tuple[str, ...] = ("radiomics_fu1", "delta")


class ModelSpec(BaseModel):
    """One row of the experiment roster.

    ``imbalance=None`` means "use the experiment default for this target".
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: ModelName
    imbalance: Optional[ImbalanceStrategy] = None
    include_covariates: bool = False

    @property
    def target(self) -> Literal["y1", "y2"]:
        return "y1" if self.name == STEP1_MODEL else "y2"

    @property
    def strategy(self) -> ImbalanceStrategy:
        return self.imbalance if self.imbalance is not None else ImbalanceStrategy()


@dataclass(frozen=True)
class PipelineSettings:
    """Numerical settings shared by every model of an experiment."""

    C: float = DEFAULT_C
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    threshold: float = DEFAULT_THRESHOLD
    k_samples: int = DEFAULT_K_SAMPLES
    min_occurrences: int = DEFAULT_MIN_OCCURRENCES
    seed: int = 0
    n_jobs: int = 1
    pooled: bool = False


# ---------------------------------------------------------------------------
# --- Result types ----------------------------------------------------------
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FittedClassifier:
    """A fitted L1 logistic model together with its normalization state.

    ``n_appended`` trailing inputs (the intermediate response) bypass the
    normalizer.
    """

    normalizer: Normalizer
    model: LogisticModel
    imbalance: str
    n_appended: int = 0

    @property
    def degenerate(self) -> bool:
        no_signal = self.n_appended == 0 and not np.any(self.normalizer.maximum > self.normalizer.minimum)
        return self.model.degenerate or no_signal

    def design(self, X_raw: np.ndarray, appended: Optional[np.ndarray] = None) -> np.ndarray:
        return design_matrix(self.normalizer, X_raw, appended, self.n_appended)

    def predict_proba(self, X_raw: np.ndarray, appended: Optional[np.ndarray] = None) -> np.ndarray:
        return predict_proba(self.model, self.design(X_raw, appended))


def design_matrix(
        normalizer: Normalizer,
        X_raw: np.ndarray,
        appended: Optional[np.ndarray],
        n_appended: int,
) -> np.ndarray:
    """Normalized features followed by the un-normalized appended columns."""
    parts = [normalizer.transform(X_raw)]
    if appended is not None:
        parts.append(np.asarray(appended, dtype=np.float64).reshape(parts[0].shape[0], -1))
    if sum(p.shape[1] for p in parts[1:]) != n_appended:
        raise PipelineError(f"Expected {n_appended} appended column(s)")
    return np.hstack(parts)


@dataclass(frozen=True, eq=False)
class SplitOutcome:
    """Test-fold result of one split; ``proba`` has one row per label draw."""

    split: int
    test: np.ndarray
    y_true: np.ndarray
    proba: np.ndarray
    scores: SkillScores
    fitted: FittedClassifier


@dataclass(frozen=True, eq=False)
class ModelResult:
    name: str
    target: str
    outcomes: Tuple[SplitOutcome, ...]
    summary: ScoreSummary
    n_patients: int
    degenerate_splits: int = 0
    flags: Dict[str, object] = field(default_factory=dict)

    @property
    def per_split(self) -> List[SkillScores]:
        return [o.scores for o in self.outcomes]


@dataclass(frozen=True, eq=False)
class ProbaTable:
    """Long-format record of Step-1 test probabilities: one entry per (patient, split)."""

    patient_idx: np.ndarray
    split_idx: np.ndarray
    proba: np.ndarray
    n_patients: int
    n_splits: int

    def __post_init__(self) -> None:
        if not (self.patient_idx.shape == self.split_idx.shape == self.proba.shape):
            raise PipelineError("ProbaTable columns must have equal length")
        if self.proba.size and ((self.proba < 0).any() or (self.proba > 1).any()):
            raise PipelineError("ProbaTable probabilities must lie in [0, 1]")
        keys = self.patient_idx.astype(np.int64) * max(self.n_splits, 1) + self.split_idx
        if np.unique(keys).size != keys.size:
            raise PipelineError("ProbaTable holds a (patient, split) pair more than once")

    @classmethod
    def from_outcomes(cls, outcomes: Sequence[SplitOutcome], n_patients: int) -> "ProbaTable":
        if not outcomes:
            return cls(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0), n_patients, 0)
        return cls(
            patient_idx=np.concatenate([o.test for o in outcomes]).astype(np.int64),
            split_idx=np.concatenate([np.full(o.test.size, o.split, dtype=np.int64) for o in outcomes]),
            proba=np.concatenate([o.proba[0] for o in outcomes]),
            n_patients=n_patients,
            n_splits=len(outcomes),
        )

    def __len__(self) -> int:
        return int(self.proba.size)

    def counts(self) -> np.ndarray:
        return np.bincount(self.patient_idx, minlength=self.n_patients)

    def for_patient(self, j: int) -> np.ndarray:
        return self.proba[self.patient_idx == j]

    def for_split(self, i: int) -> Tuple[np.ndarray, np.ndarray]:
        mask = self.split_idx == i
        return self.patient_idx[mask], self.proba[mask]

    def to_frame(self, patient_ids: Sequence[str]) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "patient_id": [patient_ids[j] for j in self.patient_idx],
                "split": self.split_idx,
                "proba": self.proba,
            }
        )


@dataclass(frozen=True, eq=False)
class SampledLabelMatrix:
    labels: np.ndarray
    samples: np.ndarray
    source_seed: int
    threshold: float = DEFAULT_THRESHOLD

    @property
    def k(self) -> int:
        return int(self.labels.shape[1])


@dataclass(frozen=True)
class CalibrationReport:
    """Calibration of one model; isotonic maps are fitted on the evaluated folds themselves."""

    model: str
    rows: Tuple[CalibrationRow, ...]
    reliability_raw: ReliabilityCurve
    reliability_isotonic: ReliabilityCurve
    in_sample: bool = True


# ---------------------------------------------------------------------------
# --- Per-split work --------------------------------------------------------
# ---------------------------------------------------------------------------

def fit_classifier(
        X: np.ndarray,
        y: np.ndarray,
        strategy: ImbalanceStrategy,
        settings: PipelineSettings,
        appended: Optional[np.ndarray] = None,
) -> FittedClassifier:
    """Normalize on the training rows, rebalance, then fit the L1 logistic model."""
    normalizer = Normalizer.from_matrix(X)
    n_appended = 0 if appended is None else int(np.asarray(appended).reshape(X.shape[0], -1).shape[1])
    X_fit, y_fit, weights = rebalance(design_matrix(normalizer, X, appended, n_appended), y, strategy)
    model = fit_l1_logistic(X_fit, y_fit, weights, C=settings.C, tol=settings.tol, max_iter=settings.max_iter)
    return FittedClassifier(normalizer=normalizer, model=model, imbalance=strategy.kind, n_appended=n_appended)


def _fit_and_evaluate(
        split: int,
        train: np.ndarray,
        test: np.ndarray,
        X: np.ndarray,
        y: np.ndarray,
        strategy: ImbalanceStrategy,
        settings: PipelineSettings,
        train_appended: Optional[np.ndarray],
        test_draws: Optional[np.ndarray],
) -> SplitOutcome:
    fitted = fit_classifier(
        X[train], y[train], strategy, settings,
        appended=None if train_appended is None else train_appended[train],
    )
    if test_draws is None:
        proba = fitted.predict_proba(X[test])[None, :]
    else:
        proba = np.vstack([fitted.predict_proba(X[test], draw) for draw in test_draws])
    y_test = y[test]
    per_draw = [skill_scores(y_test, (p >= settings.threshold).astype(np.int64), p) for p in proba]
    return SplitOutcome(
        split=split,
        test=test,
        y_true=y_test,
        proba=proba,
        scores=per_draw[0] if len(per_draw) == 1 else mean_scores(per_draw),
        fitted=fitted,
    )


def _summarize(outcomes: Sequence[SplitOutcome], settings: PipelineSettings) -> ScoreSummary:
    if not settings.pooled:
        return summarize_across_splits([o.scores for o in outcomes])
    y = np.concatenate([o.y_true for o in outcomes])
    per_draw = []
    for c in range(outcomes[0].proba.shape[0]):
        p = np.concatenate([o.proba[c] for o in outcomes])
        per_draw.append(skill_scores(y, (p >= settings.threshold).astype(np.int64), p))
    return pooled_summary(mean_scores(per_draw), len(outcomes))


def _evaluate(
        name: str,
        target: Literal["y1", "y2"],
        cohort: Cohort,
        plan: SplitPlan,
        strategy: ImbalanceStrategy,
        settings: PipelineSettings,
        view: FeatureView,
        train_appended: Optional[np.ndarray] = None,
        test_draws_for: Optional[Callable[[int, np.ndarray], np.ndarray]] = None,
) -> ModelResult:
    y = cohort.y1 if target == "y1" else cohort.y2
    tasks = []
    for i, (train, test) in enumerate(plan):
        tr = train[view.eligible[train]]
        te = test[view.eligible[test]]
        if tr.size < 2 or te.size == 0:
            raise PipelineError(f"{name}: split {i} has {tr.size} eligible training and {te.size} test patients")
        draws = test_draws_for(i, te) if test_draws_for is not None else None
        split_strategy = strategy.model_copy(update={"seed": derive_seed(settings.seed, name, i)})
        tasks.append(delayed(_fit_and_evaluate)(i, tr, te, view.X, y, split_strategy, settings, train_appended, draws))

    log.debug(f"{name}: {len(tasks)} splits, {view.n_features} features, n_jobs={settings.n_jobs}")
    # ordered generator; the bar advances as split results come back
    results = Parallel(n_jobs=settings.n_jobs, backend="loky", return_as="generator")(tasks)
    outcomes = tuple(tqdm(results, total=len(tasks), desc=name, disable=not SHOW_PROGRESS, leave=False))
    degenerate = sum(o.fitted.degenerate for o in outcomes)
    if degenerate:
        log.warning(f"{name}: {degenerate}/{len(outcomes)} split(s) produced a degenerate model")
    summary = _summarize(outcomes, settings)
    log.info(
        f"{name}: balanced_accuracy={summary['balanced_accuracy'].mean:.3f} "
        f"roc_auc={summary['roc_auc'].mean:.3f} over {summary.n_splits} splits"
    )
    return ModelResult(
        name=name,
        target=target,
        outcomes=outcomes,
        summary=summary,
        n_patients=view.n_eligible,
        degenerate_splits=int(degenerate),
        flags=dict(view.flags),
    )


# ---------------------------------------------------------------------------
# --- Step 1: first follow-up -----------------------------------------------
# ---------------------------------------------------------------------------

@timeit("step 1")
def run_step1(
        cohort: Cohort,
        plan: SplitPlan,
        spec: ModelSpec,
        settings: PipelineSettings = PipelineSettings(),
) -> Tuple[ModelResult, ProbaTable]:
    """Train f1 on baseline features (plus covariates) per split and record test probabilities."""
    view = baseline_view(cohort, "y1", spec.include_covariates)
    result = _evaluate(STEP1_MODEL, "y1", cohort, plan, spec.strategy, settings, view)
    table = ProbaTable.from_outcomes(result.outcomes, cohort.n_patients)
    return result, table


# ---------------------------------------------------------------------------
# --- Step 2: per-patient densities and sampled labels ----------------------
# ---------------------------------------------------------------------------

def build_patient_densities(
        table: ProbaTable,
        min_occurrences: int = DEFAULT_MIN_OCCURRENCES,
) -> Tuple[GaussianKde, ...]:
    """One Gaussian KDE per patient over that patient's recorded probabilities."""
    if len(table) == 0:
        raise PipelineError("Cannot build patient densities from an empty ProbaTable")
    counts = table.counts()
    short = np.flatnonzero(counts < min_occurrences)
    if short.size:
        log.error(f"{short.size} patient(s) below min_occurrences={min_occurrences}")
        raise PipelineError(
            f"Patient index {int(short[0])} has {int(counts[short[0]])} recorded probabilities "
            f"(min_occurrences={min_occurrences})"
        )
    return tuple(fit_kde(table.for_patient(j)) for j in range(table.n_patients))


def sample_intermediate_labels(
        densities: Sequence[GaussianKde],
        k: int = DEFAULT_K_SAMPLES,
        threshold: float = DEFAULT_THRESHOLD,
        seed: int = 0,
) -> SampledLabelMatrix:
    """Draw ``k`` probabilities per patient, clip them to [0, 1] and threshold at ``>= threshold``."""
    if k < 1:
        raise PipelineError(f"k must be >= 1, got {k}")
    samples = np.vstack(
        [np.clip(sample(kde, k, derive_seed(seed, j)), 0.0, 1.0) for j, kde in enumerate(densities)]
    ) if densities else np.zeros((0, k))
    labels = (samples >= threshold).astype(np.int64)
    log.debug(f"Sampled {k} intermediate labels for {len(densities)} patients (rate={labels.mean():.3f})")
    return SampledLabelMatrix(labels=labels, samples=samples, source_seed=seed, threshold=threshold)


# ---------------------------------------------------------------------------
# --- Step 3: longitudinal model --------------------------------------------
# ---------------------------------------------------------------------------

@timeit("longitudinal")
def run_longitudinal(
        cohort: Cohort,
        plan: SplitPlan,
        spec: ModelSpec,
        settings: PipelineSettings = PipelineSettings(),
        mode: LabelMode = "true",
        table: Optional[ProbaTable] = None,
        matrix: Optional[SampledLabelMatrix] = None,
) -> ModelResult:
    """Train f2^L on baseline features followed by the true y1; test with ``mode`` labels.

    ``predicted`` needs the Step-1 ``table`` built on the same plan;
    ``sampled`` needs a ``matrix`` and averages the k per-draw scores of
    each split.
    """
    y1 = cohort.y1.astype(np.float64)

    if mode == "true":
        def draws(i: int, test: np.ndarray) -> np.ndarray:
            return y1[test][None, :]
    elif mode == "predicted":
        if table is None:
            raise PipelineError("predicted mode needs the Step-1 ProbaTable")

        def draws(i: int, test: np.ndarray) -> np.ndarray:
            idx, proba = table.for_split(i)
            if not np.array_equal(idx, test):
                raise PipelineError(f"Split {i}: ProbaTable test patients do not match the plan")
            return (proba >= settings.threshold).astype(np.float64)[None, :]
    elif mode == "sampled":
        if matrix is None:
            raise PipelineError("sampled mode needs a SampledLabelMatrix")
        if matrix.labels.shape[0] != cohort.n_patients:
            raise PipelineError("SampledLabelMatrix rows do not match the cohort")

        def draws(i: int, test: np.ndarray) -> np.ndarray:
            return matrix.labels[test].T.astype(np.float64)
    else:
        raise PipelineError(f"Unknown label mode {mode!r}")

    view = baseline_view(cohort, "y2", spec.include_covariates)
    return _evaluate(spec.name, "y2", cohort, plan, spec.strategy, settings, view, y1, draws)


# ---------------------------------------------------------------------------
# --- Benchmarks ------------------------------------------------------------
# ---------------------------------------------------------------------------

@timeit("benchmark")
def run_benchmark(
        cohort: Cohort,
        plan: SplitPlan,
        spec: ModelSpec,
        settings: PipelineSettings = PipelineSettings(),
) -> ModelResult:
    """Second-follow-up benchmark models (and the Step-1 model under its own name)."""
    if spec.name == STEP1_MODEL:
        return run_step1(cohort, plan, spec, settings)[0]
    if spec.name == "baseline_fu2":
        view = baseline_view(cohort, "y2", spec.include_covariates)
        return _evaluate(spec.name, "y2", cohort, plan, spec.strategy, settings, view)
    if spec.name == "labels_only":
        y1 = cohort.y1.astype(np.float64)
        view = empty_view(cohort, spec.include_covariates)
        return _evaluate(
            spec.name, "y2", cohort, plan, spec.strategy, settings, view, y1,
            lambda i, test: y1[test][None, :],
        )
    if spec.name == "radiomics_fu1":
        return _evaluate(spec.name, "y2", cohort, plan, spec.strategy, settings, fu1_view(cohort, spec.include_covariates))
    if spec.name == "delta":
        return _evaluate(spec.name, "y2", cohort, plan, spec.strategy, settings, delta_view(cohort, spec.include_covariates))
    raise PipelineError(f"{spec.name} is not a benchmark model")


# ---------------------------------------------------------------------------
# --- Calibration -----------------------------------------------------------
# ---------------------------------------------------------------------------

def evaluate_calibration(
        result: ModelResult,
        n_bins: int = RELIABILITY_BINS,
        pooled: bool = False,
) -> CalibrationReport:
    """Brier score and log loss before and after per-fold isotonic calibration.

    With ``pooled`` (leave-one-out plans) all test folds are merged into one.
    """
    folds = [(o.proba.ravel(), np.tile(o.y_true, o.proba.shape[0])) for o in result.outcomes]
    if pooled:
        folds = [(np.concatenate([f[0] for f in folds]), np.concatenate([f[1] for f in folds]))]
    rows = tuple(calibration_table(folds, result.name))

    p_all = np.concatenate([f[0] for f in folds])
    y_all = np.concatenate([f[1] for f in folds])
    calibrated = np.concatenate([apply_isotonic(fit_isotonic(p, y), p) for p, y in folds])
    return CalibrationReport(
        model=result.name,
        rows=rows,
        reliability_raw=reliability_curve(p_all, y_all, n_bins),
        reliability_isotonic=reliability_curve(calibrated, y_all, n_bins),
    )
