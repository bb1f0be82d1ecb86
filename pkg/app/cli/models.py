# app/cli/models.py
from pathlib import Path
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..services.core.config import DEFAULT_OUT_DIR
from ..services.core.constants import (
    DEFAULT_C,
    DEFAULT_K_SAMPLES,
    DEFAULT_MAX_ITER,
    DEFAULT_MAX_RETRIES,
    DEFAULT_MIN_OCCURRENCES,
    DEFAULT_N_SPLITS,
    DEFAULT_TEST_FRACTION,
    DEFAULT_THRESHOLD,
    DEFAULT_TOL,
    RELIABILITY_BINS,
)
from ..services.data.synthgen import FeatureDistribution, SynthConfig, TransitionRules
from ..services.models.resample import ImbalanceStrategy
from ..services.operations.pipeline import COHORT_ROSTER, SYNTHETIC_ROSTER, ModelSpec

__all__ = [
    "DatasetConfig",
    "ExperimentConfig",
    "FeatureDistribution",
    "FollowupFilter",
    "ImbalanceStrategy",
    "ModelSpec",
    "SynthConfig",
    "TransitionRules",
]


# Input models
class FollowupFilter(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    max_months_fu1: float = Field(20.0, gt=0)
    max_months_between: float = Field(20.0, gt=0)


class DatasetConfig(BaseModel):
    """Either a cohort CSV (``path``) or a synthetic cohort (``synth``)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    path: Optional[Path] = None
    synth: Optional[SynthConfig] = None
    covariate_columns: Tuple[str, ...] = ()
    followup_filter: Optional[FollowupFilter] = None

    @model_validator(mode="after")
    def _exactly_one_source(self) -> "DatasetConfig":
        if (self.path is None) == (self.synth is None):
            raise ValueError("dataset needs exactly one of 'path' or 'synth'")
        if self.synth is not None and (self.covariate_columns or self.followup_filter):
            raise ValueError("synthetic cohorts carry no covariates; drop covariate_columns/followup_filter")
        return self

    @property
    def kind(self) -> Literal["synth", "path"]:
        return "synth" if self.synth is not None else "path"


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    dataset: DatasetConfig
    models: Optional[List[ModelSpec]] = None
    evaluation: Literal["splits", "loocv"] = "splits"
    n_splits: Optional[int] = Field(None, ge=1)
    test_fraction: float = Field(DEFAULT_TEST_FRACTION, gt=0.0, lt=1.0)
    k_samples: int = Field(DEFAULT_K_SAMPLES, ge=1)
    threshold: float = Field(DEFAULT_THRESHOLD, gt=0.0, lt=1.0)
    C: float = Field(DEFAULT_C, gt=0.0)
    tol: float = Field(DEFAULT_TOL, gt=0.0)
    max_iter: int = Field(DEFAULT_MAX_ITER, ge=1)
    min_occurrences: int = Field(DEFAULT_MIN_OCCURRENCES, ge=1)
    max_retries: int = Field(DEFAULT_MAX_RETRIES, ge=0)
    reliability_bins: int = Field(RELIABILITY_BINS, ge=2)
    seed: int = Field(0, ge=0)
    out_dir: Path = DEFAULT_OUT_DIR

    @model_validator(mode="after")
    def _unique_models(self) -> "ExperimentConfig":
        if self.models is not None:
            names = [m.name for m in self.models]
            dup = {n for n in names if names.count(n) > 1}
            if dup:
                raise ValueError(f"models listed more than once: {', '.join(sorted(dup))}")
            if not names:
                raise ValueError("models must not be empty")
        return self

    @property
    def resolved_n_splits(self) -> int:
        return self.n_splits if self.n_splits is not None else DEFAULT_N_SPLITS[self.dataset.kind]

    def resolved_models(self) -> List[ModelSpec]:
        """Requested roster with dataset-dependent imbalance defaults filled in.

        Synthetic cohorts use inverse-frequency weighting everywhere; cohort
        files use it for the first-follow-up model and SMOTE for every
        second-follow-up model.
        """
        specs = self.models if self.models is not None else [
            ModelSpec(name=name) for name in (SYNTHETIC_ROSTER if self.dataset.kind == "synth" else COHORT_ROSTER)
        ]
        resolved = []
        for spec in specs:
            if spec.imbalance is None:
                kind = "inverse_frequency" if self.dataset.kind == "synth" or spec.target == "y1" else "smote"
                spec = spec.model_copy(update={"imbalance": ImbalanceStrategy(kind=kind)})
            resolved.append(spec)
        return resolved
