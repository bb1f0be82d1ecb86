# app/services/operations/prospective.py
"""Ensemble inference for patients that only have baseline data.

Every split of the experiment contributes one first-follow-up model and one
longitudinal model. A new patient's first-follow-up probabilities across the
splits are smoothed by a Gaussian KDE, sampled into intermediate labels, and
pushed through every longitudinal model.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Tuple

import numpy as np
import pandas as pd

from .experiment import load_dataset, make_plan, settings_for, step1_spec_for
from .pipeline import ModelResult, ModelSpec, PipelineSettings, run_longitudinal, run_step1
from ..core.config import log
from ..core.errors import PipelineError
from ..core.utils import derive_seed, timeit
from ..data.tabular import Cohort, SplitPlan, UnlabeledCohort, load_baseline_table
from ..models.density import fit_kde, sample
from ..models.resample import ImbalanceStrategy

if TYPE_CHECKING:
    from ...cli.models import ExperimentConfig

RESULT_COLUMNS: Tuple[str, ...] = (
    "patient_id",
    "p_y1_mean",
    "p_y1_sd",
    "y1_sampled_fraction",
    "kde_mass_above_threshold",
    "p_y2_mean",
    "p_y2_sd",
    "y2_label",
)


@dataclass(frozen=True, eq=False)
class ProspectiveResult:
    frame: pd.DataFrame
    n_models: int
    k_samples: int

    def __len__(self) -> int:
        return len(self.frame)


def _new_patient_block(patients: UnlabeledCohort, names: Tuple[str, ...], baseline_names: Tuple[str, ...]) -> np.ndarray:
    blocks = [np.asarray(patients.baseline)]
    for name in names[len(baseline_names):]:
        if name not in patients.covariate_names:
            raise PipelineError(f"New patients lack covariate column {name!r}")
        blocks.append(patients.covariates[:, [patients.covariate_names.index(name)]])
    return np.hstack(blocks)


def _covariate_names(cohort: Cohort, spec: ModelSpec) -> Tuple[str, ...]:
    return cohort.covariates_for(spec.target)[1] if spec.include_covariates else ()


@timeit("prospective")
def predict_prospective(
        cohort: Cohort,
        patients: UnlabeledCohort,
        plan: SplitPlan,
        settings: PipelineSettings,
        step1_spec: ModelSpec,
        longit_spec: ModelSpec,
) -> ProspectiveResult:
    """Predict both follow-up responses for ``patients`` with the split ensemble trained on ``cohort``."""
    if patients.feature_names_baseline != cohort.feature_names_baseline:
        raise PipelineError(
            f"New patients have baseline columns {list(patients.feature_names_baseline)}, "
            f"expected {list(cohort.feature_names_baseline)}"
        )
    step1, _ = run_step1(cohort, plan, step1_spec, settings)
    longit: ModelResult = run_longitudinal(cohort, plan, longit_spec, settings, mode="true")

    base_names = cohort.feature_names_baseline
    X1 = _new_patient_block(patients, base_names + _covariate_names(cohort, step1_spec), base_names)
    X2 = _new_patient_block(patients, base_names + _covariate_names(cohort, longit_spec), base_names)

    # (n_splits, n_new)
    p1 = np.vstack([o.fitted.predict_proba(X1) for o in step1.outcomes])
    k = settings.k_samples
    sample_seed = derive_seed(settings.seed, "prospective")

    rows = []
    for m, pid in enumerate(patients.patient_ids):
        kde = fit_kde(p1[:, m])
        draws = np.clip(sample(kde, k, derive_seed(sample_seed, m)), 0.0, 1.0)
        labels = (draws >= settings.threshold).astype(np.float64)
        x2 = np.repeat(X2[m:m + 1], k, axis=0)
        # (n_splits, k)
        p2 = np.vstack([o.fitted.predict_proba(x2, labels) for o in longit.outcomes])
        p2_mean = float(p2.mean())
        rows.append(
            {
                "patient_id": pid,
                "p_y1_mean": float(p1[:, m].mean()),
                "p_y1_sd": float(p1[:, m].std(ddof=1)) if p1.shape[0] > 1 else float("nan"),
                "y1_sampled_fraction": float(labels.mean()),
                "kde_mass_above_threshold": float(1.0 - kde.cdf(settings.threshold)),
                "p_y2_mean": p2_mean,
                "p_y2_sd": float(p2.std(ddof=1)) if p2.size > 1 else float("nan"),
                "y2_label": int(p2_mean >= settings.threshold),
            }
        )
    log.info(f"Prospective prediction for {patients.n_patients} patient(s) with {len(step1.outcomes)} split models")
    return ProspectiveResult(frame=pd.DataFrame(rows, columns=list(RESULT_COLUMNS)), n_models=len(step1.outcomes), k_samples=k)


def predict_from_config(config: "ExperimentConfig", input_path: str | Path, n_jobs: int = 1) -> ProspectiveResult:
    """Train the ensemble described by ``config`` and apply it to the patients in ``input_path``."""
    cohort = load_dataset(config)
    plan = make_plan(cohort, config)
    settings = settings_for(config, plan, n_jobs)
    specs = config.resolved_models()
    step1_spec = step1_spec_for(specs)
    longit_spec = next(
        (s for s in specs if s.name == "longit_gkde"),
        ModelSpec(
            name="longit_gkde",
            imbalance=ImbalanceStrategy(kind="inverse_frequency" if config.dataset.kind == "synth" else "smote"),
        ),
    )
    covariates = sorted(
        set(_covariate_names(cohort, step1_spec)) | set(_covariate_names(cohort, longit_spec)),
        key=list(cohort.covariate_names).index,
    )
    patients = load_baseline_table(input_path, cohort.feature_names_baseline, covariates)
    return predict_prospective(cohort, patients, plan, settings, step1_spec, longit_spec)
