# app/services/data/synthgen.py
"""Synthetic longitudinal cohort generator.

Features are drawn independently per feature, min-max standardized into
[-1, 1] and combined linearly into a progression score. The first response
thresholds the score; the second follows stochastic score-range rules.
"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .tabular import Cohort
from ..core.config import log
from ..core.constants import (
    BASELINE_PREFIX,
    SYNTH_ALPHA,
    SYNTH_MIN_SEED_ROWS,
    SYNTH_N_PATIENTS,
    SYNTH_P_EXTREME_LOW_TO_PROGRESSIVE,
    SYNTH_P_MODERATE_POS_TO_STABLE,
)
from ..core.errors import ConfigError, DensityError
from ..core.utils import derive_seed, round_half_up
from ..models.density import fit_kde, sample

# Fixed score cut-points of the transition rules
SCORE_BOUNDARIES: Tuple[float, float, float] = (-1.0, 0.0, 1.0)

# Continuous numpy Generator samplers accepted as parametric feature sources
PARAMETRIC_DISTRIBUTIONS = frozenset({
    "beta", "exponential", "gamma", "gumbel", "laplace", "logistic", "lognormal",
    "normal", "standard_t", "triangular", "uniform", "weibull",
})


# ---------------------------------------------------------------------------
# --- Configuration models --------------------------------------------------
# ---------------------------------------------------------------------------

class TransitionRules(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    p_extreme_low_to_progressive: float = Field(SYNTH_P_EXTREME_LOW_TO_PROGRESSIVE, ge=0.0, le=1.0)
    p_moderate_pos_to_stable: float = Field(SYNTH_P_MODERATE_POS_TO_STABLE, ge=0.0, le=1.0)

    @property
    def boundaries(self) -> Tuple[float, float, float]:
        return SCORE_BOUNDARIES


class FeatureDistribution(BaseModel):
    """A numpy ``Generator`` distribution, e.g. ``{"name": "normal", "params": {"loc": 0, "scale": 1}}``."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = "uniform"
    params: Dict[str, float] = Field(default_factory=lambda: {"low": -1.0, "high": 1.0})

    @field_validator("name")
    @classmethod
    def _known_distribution(cls, v: str) -> str:
        if v not in PARAMETRIC_DISTRIBUTIONS:
            raise ValueError(f"Unknown distribution {v!r}; expected one of {sorted(PARAMETRIC_DISTRIBUTIONS)}")
        return v

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        try:
            values = getattr(rng, self.name)(**self.params, size=size)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid parameters {self.params} for distribution {self.name!r}: {e}") from e
        return np.asarray(values, dtype=np.float64)


class SynthConfig(BaseModel):
    """Synthetic cohort parameters.

    ``seed_sample_path`` switches the feature source from the parametric
    distributions to per-feature KDEs fitted on a seed CSV (one column per
    feature).
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    n_patients: int = Field(SYNTH_N_PATIENTS, ge=10)
    n_features: int = Field(len(SYNTH_ALPHA), ge=1)
    alpha: Tuple[float, ...] = SYNTH_ALPHA
    seed_sample_path: Path | None = None
    features: Tuple[FeatureDistribution, ...] | None = None
    transition: TransitionRules = TransitionRules()
    seed: int = 0

    @model_validator(mode="after")
    def _check_dimensions(self) -> "SynthConfig":
        if len(self.alpha) != self.n_features:
            raise ValueError(f"alpha has {len(self.alpha)} entries but n_features={self.n_features}")
        if self.features is not None and len(self.features) != self.n_features:
            raise ValueError(f"{len(self.features)} feature distributions given for n_features={self.n_features}")
        return self

    def distributions(self) -> Tuple[FeatureDistribution, ...]:
        return self.features if self.features is not None else (FeatureDistribution(),) * self.n_features


# ---------------------------------------------------------------------------
# --- Construction steps ----------------------------------------------------
# ---------------------------------------------------------------------------

def _read_seed_sample(path: Path, n_features: int) -> pd.DataFrame:
    df = pd.read_csv(path)
    if df.shape[1] != n_features:
        raise ConfigError(f"Seed sample {path} has {df.shape[1]} columns, expected {n_features} (one per alpha entry)")
    if len(df) < SYNTH_MIN_SEED_ROWS:
        raise ConfigError(f"Seed sample {path} has {len(df)} rows; at least {SYNTH_MIN_SEED_ROWS} required")
    try:
        return df.astype(np.float64)
    except ValueError as e:
        raise ConfigError(f"Seed sample {path} contains non-numeric values: {e}") from e


def draw_features(config: SynthConfig) -> Tuple[np.ndarray, List[str]]:
    """Raw (unstandardized) feature draws, shape (n_patients, n_features)."""
    n = config.n_patients
    columns = []
    if config.seed_sample_path is not None:
        seed_df = _read_seed_sample(config.seed_sample_path, config.n_features)
        names = [str(c) for c in seed_df.columns]
        for f, name in enumerate(names):
            values = seed_df[name].to_numpy()
            if np.ptp(values) == 0:
                log.error(f"Seed sample feature {name!r} is constant")
                raise DensityError(f"Seed sample feature {name!r} is constant; cannot fit a KDE")
            columns.append(sample(fit_kde(values), n, derive_seed(config.seed, "features", f)))
    else:
        names = [f"feature_{f + 1}" for f in range(config.n_features)]
        for f, dist in enumerate(config.distributions()):
            rng = np.random.default_rng(derive_seed(config.seed, "features", f))
            columns.append(dist.draw(rng, n))
    return np.column_stack(columns), names


def standardize(X: np.ndarray, names: List[str]) -> np.ndarray:
    """Min-max each column over the cohort into [-1, 1]."""
    lo, hi = X.min(axis=0), X.max(axis=0)
    flat = np.flatnonzero(hi == lo)
    if flat.size:
        raise DensityError(f"Generated feature {names[int(flat[0])]!r} is constant")
    return 2.0 * (X - lo) / (hi - lo) - 1.0


def progression_score(X_std: np.ndarray, alpha: Tuple[float, ...] | np.ndarray) -> np.ndarray:
    return X_std @ np.asarray(alpha, dtype=np.float64)


def assign_labels(
        scores: np.ndarray,
        rules: TransitionRules,
        rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray]:
    """First- and second-follow-up labels from progression scores.

    Score ranges for the second response: above 1 progresses; below -1 a
    ``p_extreme_low_to_progressive`` share progresses and the rest stays
    stable; [-1, 0) stays stable; in [0, 1] a ``p_moderate_pos_to_stable``
    share becomes stable and the rest progresses. Shares are exact counts
    (rounded half up) drawn without replacement.
    """
    low, mid, high = SCORE_BOUNDARIES
    y1 = (scores >= mid).astype(np.int64)
    y2 = np.zeros_like(y1)

    y2[scores > high] = 1

    extreme_low = np.flatnonzero(scores < low)
    n_prog = round_half_up(rules.p_extreme_low_to_progressive * extreme_low.size)
    y2[rng.choice(extreme_low, size=n_prog, replace=False)] = 1

    moderate_pos = np.flatnonzero((scores >= mid) & (scores <= high))
    n_stable = round_half_up(rules.p_moderate_pos_to_stable * moderate_pos.size)
    y2[moderate_pos] = 1
    y2[rng.choice(moderate_pos, size=n_stable, replace=False)] = 0
    return y1, y2


def generate(config: SynthConfig) -> Cohort:
    raw, source_names = draw_features(config)
    X_std = standardize(raw, source_names)
    scores = progression_score(X_std, config.alpha)
    y1, y2 = assign_labels(scores, config.transition, np.random.default_rng(derive_seed(config.seed, "transition")))

    width = max(4, len(str(config.n_patients)))
    cohort = Cohort(
        patient_ids=tuple(f"P{j + 1:0{width}d}" for j in range(config.n_patients)),
        baseline=X_std,
        fu1=np.zeros((config.n_patients, 0)),
        covariates=np.zeros((config.n_patients, 0)),
        y1=y1,
        y2=y2,
        feature_names_baseline=tuple(f"{BASELINE_PREFIX}{f + 1}" for f in range(config.n_features)),
    )
    log.info(
        f"Synthetic cohort: n={config.n_patients}, seed={config.seed}, y1 rate={y1.mean():.3f}, "
        f"y2 rate={y2.mean():.3f}, source={'seed-sample KDE' if config.seed_sample_path else 'parametric'}"
    )
    return cohort


def transition_matrix(cohort: Cohort) -> np.ndarray:
    """2x2 counts, rows indexed by y1 and columns by y2."""
    return np.bincount(cohort.strata, minlength=4).reshape(2, 2)


def format_transition_matrix(matrix: np.ndarray) -> str:
    return "\n".join(
        [
            "        y2=0  y2=1",
            f"y1=0  {matrix[0, 0]:6d} {matrix[0, 1]:5d}",
            f"y1=1  {matrix[1, 0]:6d} {matrix[1, 1]:5d}",
        ]
    )
