# app/services/operations/experiment.py
"""Full experiment: dataset, shared split plan, model roster, calibration and plot data."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, List, Optional, Tuple

import numpy as np

from .pipeline import (
    FU1_MODELS,
    LONGITUDINAL_MODES,
    STEP1_MODEL,
    CalibrationReport,
    ModelResult,
    ModelSpec,
    PipelineSettings,
    ProbaTable,
    SampledLabelMatrix,
    build_patient_densities,
    evaluate_calibration,
    run_benchmark,
    run_longitudinal,
    run_step1,
    sample_intermediate_labels,
)
from ..analytics.metrics import PcaResult, ScoreSummary, pca_project
from ..core.config import log
from ..core.constants import KDE_GRID_POINTS
from ..core.utils import derive_seed, timeit
from ..data.synthgen import generate, transition_matrix
from ..data.tabular import (
    Cohort,
    ColumnSchema,
    SplitPlan,
    filter_by_followup_interval,
    load_cohort,
    make_loo_splits,
    make_splits,
)
from ..models.density import GaussianKde
from ..models.resample import ImbalanceStrategy

if TYPE_CHECKING:
    from ...cli.models import ExperimentConfig

STEP1_DEPENDANTS = ("longit_predicted", "longit_gkde")


# ---------------------------------------------------------------------------
# --- Report types ----------------------------------------------------------
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelRecord:
    """Outcome of one roster entry; ``summary`` is None when the model failed."""

    name: str
    status: str
    imbalance: str
    include_covariates: bool
    summary: Optional[ScoreSummary] = None
    error: Optional[str] = None
    n_patients: int = 0
    degenerate_splits: int = 0
    flags: Dict[str, object] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass(frozen=True, eq=False)
class PatientDensityData:
    """Step-2 material per patient: recorded probabilities, KDE and sampled labels."""

    table: ProbaTable
    densities: Tuple[GaussianKde, ...]
    matrix: SampledLabelMatrix
    grid: np.ndarray

    def pdf_grid(self) -> np.ndarray:
        return np.vstack([kde.pdf(self.grid) for kde in self.densities])

    def mass_above(self, threshold: float) -> np.ndarray:
        """KDE mass on [threshold, inf) per patient."""
        return np.array([1.0 - kde.cdf(threshold) for kde in self.densities])


@dataclass(eq=False)
class ExperimentReport:
    config: Dict[str, object]
    patient_ids: Tuple[str, ...]
    cohort_summary: Dict[str, object]
    plan_summary: Dict[str, object]
    seeds: Dict[str, object]
    models: Dict[str, ModelRecord]
    calibration: Dict[str, CalibrationReport]
    transition: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    step2: Optional[PatientDensityData] = None
    pca: Optional[PcaResult] = None
    metadata: Dict[str, object] = field(default_factory=dict)

    @property
    def succeeded(self) -> List[str]:
        return [name for name, rec in self.models.items() if rec.ok]

    @property
    def failed(self) -> List[str]:
        return [name for name, rec in self.models.items() if not rec.ok]


# ---------------------------------------------------------------------------
# --- Building blocks -------------------------------------------------------
# ---------------------------------------------------------------------------

def load_dataset(config: "ExperimentConfig") -> Cohort:
    """Generate (seeded by the master seed) or load the experiment cohort."""
    dataset = config.dataset
    if dataset.synth is not None:
        return generate(dataset.synth.model_copy(update={"seed": config.seed}))
    cohort = load_cohort(dataset.path, ColumnSchema(covariate_columns=tuple(dataset.covariate_columns)))
    if dataset.followup_filter is not None:
        cohort = filter_by_followup_interval(
            cohort, dataset.followup_filter.max_months_fu1, dataset.followup_filter.max_months_between
        )
    return cohort


def make_plan(cohort: Cohort, config: "ExperimentConfig") -> SplitPlan:
    if config.evaluation == "loocv":
        return make_loo_splits(cohort)
    return make_splits(
        cohort,
        n_splits=config.resolved_n_splits,
        test_fraction=config.test_fraction,
        seed=config.seed,
        min_occurrences=config.min_occurrences,
        max_retries=config.max_retries,
    )


def settings_for(config: "ExperimentConfig", plan: SplitPlan, n_jobs: int = 1) -> PipelineSettings:
    return PipelineSettings(
        C=config.C,
        tol=config.tol,
        max_iter=config.max_iter,
        threshold=config.threshold,
        k_samples=config.k_samples,
        min_occurrences=plan.min_occurrences,
        seed=config.seed,
        n_jobs=n_jobs,
        pooled=plan.kind == "loo",
    )


def step1_spec_for(specs: List[ModelSpec]) -> ModelSpec:
    """The roster's Step-1 spec, or a default one when only its dependants were requested."""
    for spec in specs:
        if spec.name == STEP1_MODEL:
            return spec
    include = any(s.include_covariates for s in specs if s.name in STEP1_DEPENDANTS)
    return ModelSpec(
        name=STEP1_MODEL, imbalance=ImbalanceStrategy(kind="inverse_frequency"), include_covariates=include
    )


def _record(spec: ModelSpec, result: ModelResult) -> ModelRecord:
    return ModelRecord(
        name=spec.name,
        status="ok",
        imbalance=spec.strategy.kind,
        include_covariates=spec.include_covariates,
        summary=result.summary,
        n_patients=result.n_patients,
        degenerate_splits=result.degenerate_splits,
        flags=result.flags,
    )


def _failure(spec: ModelSpec, error: Exception | str) -> ModelRecord:
    message = error if isinstance(error, str) else f"{type(error).__name__}: {error}"
    log.error(f"Model {spec.name} failed: {message}")
    return ModelRecord(
        name=spec.name,
        status="failed",
        imbalance=spec.strategy.kind,
        include_covariates=spec.include_covariates,
        error=message,
    )


# ---------------------------------------------------------------------------
# --- Orchestration ---------------------------------------------------------
# ---------------------------------------------------------------------------

@timeit("experiment")
def run_experiment(config: "ExperimentConfig", n_jobs: int = 1) -> ExperimentReport:
    """Run every requested model on one shared split plan.

    A model that raises is recorded as failed; the others still run. Models
    that depend on Step 1 (or Step 2) fail together with it.
    """
    cohort = load_dataset(config)
    plan = make_plan(cohort, config)
    settings = settings_for(config, plan, n_jobs)
    specs = config.resolved_models()
    names = [s.name for s in specs]
    log.info(f"Experiment: {cohort.n_patients} patients, {len(plan)} splits ({plan.kind}), models={names}")

    results: Dict[str, ModelResult] = {}
    records: Dict[str, ModelRecord] = {}

    table: Optional[ProbaTable] = None
    step1_error: Optional[str] = None
    if STEP1_MODEL in names or any(n in STEP1_DEPENDANTS for n in names):
        step1_spec = step1_spec_for(specs)
        try:
            results[STEP1_MODEL], table = run_step1(cohort, plan, step1_spec, settings)
        except Exception as e:  # noqa: BLE001
            step1_error = f"step 1 failed: {type(e).__name__}: {e}"
            log.error(step1_error)

    step2: Optional[PatientDensityData] = None
    step2_error: Optional[str] = None
    gkde_seed = derive_seed(config.seed, "gkde")
    if "longit_gkde" in names and table is not None:
        try:
            densities = build_patient_densities(table, settings.min_occurrences)
            matrix = sample_intermediate_labels(densities, settings.k_samples, settings.threshold, gkde_seed)
            step2 = PatientDensityData(
                table=table, densities=densities, matrix=matrix, grid=np.linspace(0.0, 1.0, KDE_GRID_POINTS)
            )
        except Exception as e:  # noqa: BLE001
            step2_error = f"step 2 failed: {type(e).__name__}: {e}"
            log.error(step2_error)

    for spec in specs:
        if spec.name == STEP1_MODEL:
            records[spec.name] = _record(spec, results[STEP1_MODEL]) if step1_error is None else _failure(spec, step1_error)
            continue
        mode = LONGITUDINAL_MODES.get(spec.name)
        if mode in ("predicted", "sampled") and step1_error is not None:
            records[spec.name] = _failure(spec, step1_error)
            continue
        if mode == "sampled" and step2_error is not None:
            records[spec.name] = _failure(spec, step2_error)
            continue
        try:
            if mode is None:
                result = run_benchmark(cohort, plan, spec, settings)
            else:
                result = run_longitudinal(
                    cohort, plan, spec, settings, mode,
                    table=table, matrix=step2.matrix if step2 is not None else None,
                )
            results[spec.name] = result
            records[spec.name] = _record(spec, result)
        except Exception as e:  # noqa: BLE001
            records[spec.name] = _failure(spec, e)

    calibration: Dict[str, CalibrationReport] = {}
    for name in names:
        if name in results and records[name].ok:
            try:
                calibration[name] = evaluate_calibration(results[name], config.reliability_bins, settings.pooled)
            except Exception as e:  # noqa: BLE001
                log.warning(f"Calibration of {name} skipped: {e}")

    pca = pca_project(cohort.baseline) if cohort.n_patients >= 3 and cohort.n_features >= 2 else None
    counts = plan.test_counts()

    report = ExperimentReport(
        config=config.model_dump(mode="json", exclude={"out_dir"}),
        patient_ids=cohort.patient_ids,
        cohort_summary={
            "n_patients": cohort.n_patients,
            "n_features_baseline": cohort.n_features,
            "n_features_fu1": len(cohort.feature_names_fu1),
            "n_with_fu1": int(cohort.has_fu1.sum()),
            "covariates": list(cohort.covariate_names),
            "fu1_models_restricted_to_fu1_patients": [n for n in names if n in FU1_MODELS],
        },
        plan_summary={
            "kind": plan.kind,
            "n_splits": len(plan),
            "test_fraction": plan.test_fraction,
            "stratify_key": list(plan.stratify_key),
            "min_occurrences": plan.min_occurrences,
            "attempt": plan.attempt,
            "test_occurrences_min": int(counts.min()),
            "test_occurrences_max": int(counts.max()),
        },
        seeds={
            "master": config.seed,
            "synth": config.seed if config.dataset.kind == "synth" else None,
            "split_plan": derive_seed(config.seed, "splits", plan.attempt) if plan.kind == "stratified" else None,
            "gkde_sampling": gkde_seed if step2 is not None else None,
            "model_splits": {name: [derive_seed(settings.seed, name, i) for i in range(len(plan))]
                            for name in dict.fromkeys([*results, *names])},
            "gkde_patients": (
                [derive_seed(gkde_seed, j) for j in range(step2.matrix.labels.shape[0])] if step2 is not None else None
            ),
        },
        models=records,
        calibration=calibration,
        transition=transition_matrix(cohort),
        y1=np.asarray(cohort.y1),
        y2=np.asarray(cohort.y2),
        step2=step2,
        pca=pca,
        metadata={
            "ci_method": "pooled (leave-one-out)" if settings.pooled else "normal approximation: mean +/- 1.96 sd / sqrt(m)",
            "calibration": "isotonic map fitted and evaluated on each test fold (in-sample)",
            "step2_input": "raw Step-1 test probabilities",
            "longitudinal_feature_order": "baseline features, covariates, then y1 (un-normalized)",
        },
    )
    log.info(f"Experiment finished: {len(report.succeeded)} succeeded, {len(report.failed)} failed")
    return report
