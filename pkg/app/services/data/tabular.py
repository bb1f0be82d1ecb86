# app/services/data/tabular.py
"""Cohort data model, CSV ingestion, min-max normalization and split plans.

A cohort is stored column-wise (one numpy matrix per feature block) and is
immutable once built, so it can be shipped to parallel workers as is.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, List, Literal, Sequence, Tuple

import numpy as np
import pandas as pd

from ..core.config import log
from ..core.constants import (
    BASELINE_PREFIX,
    DEFAULT_MAX_RETRIES,
    DEFAULT_MIN_OCCURRENCES,
    FU1_PREFIX,
    LABEL_COLUMNS,
    MONTHS_FU1,
    MONTHS_FU2,
    PATIENT_ID_COLUMN,
)
from ..core.errors import CohortParseError, CohortValidationError, SplitPlanError
from ..core.utils import as_matrix, derive_seed, round_half_up

FeatureSelector = Literal["baseline", "fu1", "covariates"] | Sequence[str]


# ---------------------------------------------------------------------------
# --- Domain types ----------------------------------------------------------
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ColumnSchema:
    """How cohort CSV columns map onto feature blocks."""

    baseline_prefix: str = BASELINE_PREFIX
    fu1_prefix: str = FU1_PREFIX
    covariate_columns: Tuple[str, ...] = ()


@dataclass(frozen=True, eq=False)
class PatientRecord:
    patient_id: str
    baseline: np.ndarray
    fu1: np.ndarray | None
    covariates: np.ndarray
    y1: int
    y2: int


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Cohort:
    """Patient-indexed tabular dataset with two binary follow-up responses.

    Parameters
    ----------
    patient_ids : tuple of str
        Unique identifiers, in file order.
    baseline : ndarray, shape (n, M)
        Baseline features; never missing.
    fu1 : ndarray, shape (n, F)
        First follow-up features; a row is all-NaN when the patient has none.
    covariates : ndarray, shape (n, K)
        Demographic and interval covariates.
    y1, y2 : ndarray of {0, 1}
        Responses at the first and second follow-up.
    """

    patient_ids: Tuple[str, ...]
    baseline: np.ndarray
    fu1: np.ndarray
    covariates: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    feature_names_baseline: Tuple[str, ...]
    feature_names_fu1: Tuple[str, ...] = ()
    covariate_names: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        n = len(self.patient_ids)
        baseline = as_matrix(self.baseline, "baseline") if n else np.zeros((0, len(self.feature_names_baseline)))
        fu1 = np.asarray(self.fu1, dtype=np.float64).reshape(n, len(self.feature_names_fu1))
        covariates = np.asarray(self.covariates, dtype=np.float64).reshape(n, len(self.covariate_names))
        y1 = np.asarray(self.y1).astype(np.int64)
        y2 = np.asarray(self.y2).astype(np.int64)

        if len(set(self.patient_ids)) != n:
            seen: set[str] = set()
            dup = next(p for p in self.patient_ids if p in seen or seen.add(p))
            raise CohortValidationError(f"Duplicate patient_id {dup!r}")
        if baseline.shape != (n, len(self.feature_names_baseline)):
            raise CohortValidationError(
                f"Baseline block has shape {baseline.shape}, expected ({n}, {len(self.feature_names_baseline)})"
            )
        if not np.isfinite(baseline).all():
            raise CohortValidationError("Baseline features must be finite and complete")
        if y1.shape != (n,) or y2.shape != (n,):
            raise CohortValidationError("y1 and y2 must have one entry per patient")
        for name, y in (("y1", y1), ("y2", y2)):
            if not np.isin(y, (0, 1)).all():
                raise CohortValidationError(f"{name} must be binary (0/1)")
        present = ~np.isnan(fu1)
        partial = present.any(axis=1) & ~present.all(axis=1)
        if partial.any():
            pid = self.patient_ids[int(np.flatnonzero(partial)[0])]
            raise CohortValidationError(f"Patient {pid!r} has partially missing fu1 features")
        if not np.isfinite(covariates).all():
            raise CohortValidationError("Covariates must be finite and complete")

        object.__setattr__(self, "patient_ids", tuple(str(p) for p in self.patient_ids))
        object.__setattr__(self, "baseline", _frozen(baseline))
        object.__setattr__(self, "fu1", _frozen(fu1))
        object.__setattr__(self, "covariates", _frozen(covariates))
        object.__setattr__(self, "y1", _frozen(y1))
        object.__setattr__(self, "y2", _frozen(y2))
        object.__setattr__(self, "feature_names_baseline", tuple(self.feature_names_baseline))
        object.__setattr__(self, "feature_names_fu1", tuple(self.feature_names_fu1))
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))

    # ---------------------------------------------------------------------
    # --- Views -----------------------------------------------------------
    # ---------------------------------------------------------------------

    @property
    def n_patients(self) -> int:
        return len(self.patient_ids)

    @property
    def n_features(self) -> int:
        return len(self.feature_names_baseline)

    @property
    def has_fu1(self) -> np.ndarray:
        """Boolean mask of patients whose first follow-up features are present."""
        if not self.feature_names_fu1:
            return np.zeros(self.n_patients, dtype=bool)
        return ~np.isnan(self.fu1).any(axis=1)

    @property
    def strata(self) -> np.ndarray:
        """Joint (y1, y2) label encoded as 2*y1 + y2."""
        return 2 * self.y1 + self.y2

    @property
    def records(self) -> List[PatientRecord]:
        has_fu1 = self.has_fu1
        return [
            PatientRecord(
                patient_id=pid,
                baseline=self.baseline[j],
                fu1=self.fu1[j] if has_fu1[j] else None,
                covariates=self.covariates[j],
                y1=int(self.y1[j]),
                y2=int(self.y2[j]),
            )
            for j, pid in enumerate(self.patient_ids)
        ]

    @classmethod
    def from_records(
            cls,
            records: Sequence[PatientRecord],
            feature_names_baseline: Sequence[str],
            feature_names_fu1: Sequence[str] = (),
            covariate_names: Sequence[str] = (),
    ) -> "Cohort":
        n_fu1 = len(feature_names_fu1)
        return cls(
            patient_ids=tuple(r.patient_id for r in records),
            baseline=np.array([r.baseline for r in records], dtype=np.float64).reshape(len(records), -1),
            fu1=np.array(
                [r.fu1 if r.fu1 is not None else np.full(n_fu1, np.nan) for r in records], dtype=np.float64
            ).reshape(len(records), n_fu1),
            covariates=np.array([r.covariates for r in records], dtype=np.float64).reshape(
                len(records), len(covariate_names)
            ),
            y1=np.array([r.y1 for r in records]),
            y2=np.array([r.y2 for r in records]),
            feature_names_baseline=tuple(feature_names_baseline),
            feature_names_fu1=tuple(feature_names_fu1),
            covariate_names=tuple(covariate_names),
        )

    def subset(self, indices: Sequence[int] | np.ndarray) -> "Cohort":
        idx = np.asarray(indices, dtype=np.int64)
        return Cohort(
            patient_ids=tuple(self.patient_ids[i] for i in idx),
            baseline=self.baseline[idx],
            fu1=self.fu1[idx],
            covariates=self.covariates[idx],
            y1=self.y1[idx],
            y2=self.y2[idx],
            feature_names_baseline=self.feature_names_baseline,
            feature_names_fu1=self.feature_names_fu1,
            covariate_names=self.covariate_names,
        )

    def select(self, columns: FeatureSelector) -> np.ndarray:
        """Return the feature matrix for a named block or an explicit column list."""
        if isinstance(columns, str):
            if columns == "baseline":
                return np.asarray(self.baseline)
            if columns == "fu1":
                return np.asarray(self.fu1)
            if columns == "covariates":
                return np.asarray(self.covariates)
            columns = [columns]
        blocks = []
        for name in columns:
            if name in self.feature_names_baseline:
                blocks.append(self.baseline[:, self.feature_names_baseline.index(name)])
            elif name in self.feature_names_fu1:
                blocks.append(self.fu1[:, self.feature_names_fu1.index(name)])
            elif name in self.covariate_names:
                blocks.append(self.covariates[:, self.covariate_names.index(name)])
            else:
                raise KeyError(f"Unknown column {name!r}")
        return np.column_stack(blocks) if blocks else np.zeros((self.n_patients, 0))

    def covariates_for(self, target: Literal["y1", "y2"]) -> Tuple[np.ndarray, Tuple[str, ...]]:
        """Covariates relevant to predicting ``target``.

        The interval covariate of the other follow-up is left out: a y1 model
        sees months_fu1 only, a y2 model sees months_fu2 only.
        """
        skip = MONTHS_FU2 if target == "y1" else MONTHS_FU1
        keep = [i for i, name in enumerate(self.covariate_names) if name != skip]
        return self.covariates[:, keep], tuple(self.covariate_names[i] for i in keep)


@dataclass(frozen=True, eq=False)
class UnlabeledCohort:
    """Patients with baseline data only, used for prospective inference."""

    patient_ids: Tuple[str, ...]
    baseline: np.ndarray
    covariates: np.ndarray
    feature_names_baseline: Tuple[str, ...]
    covariate_names: Tuple[str, ...] = ()

    @property
    def n_patients(self) -> int:
        return len(self.patient_ids)


@dataclass(frozen=True, eq=False)
class SplitPlan:
    """Fixed collection of train/test partitions shared by every model of an experiment."""

    splits: Tuple[Tuple[np.ndarray, np.ndarray], ...]
    test_fraction: float
    seed: int
    n_patients: int
    min_occurrences: int = DEFAULT_MIN_OCCURRENCES
    attempt: int = 0
    kind: Literal["stratified", "loo"] = "stratified"
    stratify_key: Tuple[str, str] = field(default=LABEL_COLUMNS)

    def __len__(self) -> int:
        return len(self.splits)

    def __iter__(self) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
        return iter(self.splits)

    def test_counts(self) -> np.ndarray:
        """How many test sets each patient belongs to."""
        counts = np.zeros(self.n_patients, dtype=np.int64)
        for _, test in self.splits:
            counts[test] += 1
        return counts


@dataclass(frozen=True, eq=False)
class Normalizer:
    """Per-feature min-max scaler fitted on training rows."""

    minimum: np.ndarray
    maximum: np.ndarray

    def __post_init__(self) -> None:
        if np.any(self.minimum > self.maximum):
            raise ValueError("Normalizer requires min <= max per feature")

    @classmethod
    def from_matrix(cls, X: np.ndarray) -> "Normalizer":
        X = as_matrix(X)
        if X.shape[0] == 0:
            raise ValueError("Cannot fit a normalizer on zero rows")
        return cls(minimum=_frozen(X.min(axis=0)), maximum=_frozen(X.max(axis=0)))

    @property
    def n_features(self) -> int:
        return int(self.minimum.shape[0])

    def transform(self, X: np.ndarray) -> np.ndarray:
        return apply_normalizer(self, X)


# ---------------------------------------------------------------------------
# --- CSV ingestion ---------------------------------------------------------
# ---------------------------------------------------------------------------

def _read_frame(path: str | Path) -> pd.DataFrame:
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.ParserError as e:
        log.error(f"Malformed cohort CSV {path}: {e}")
        raise CohortParseError(f"{path}: {e}") from e
    except pd.errors.EmptyDataError as e:
        raise CohortParseError(f"{path}: file is empty") from e


def _numeric_column(df: pd.DataFrame, column: str, allow_empty: bool) -> np.ndarray:
    raw = df[column].str.strip()
    values = pd.to_numeric(raw.where(raw != "", None), errors="coerce")
    bad = values.isna() & (raw != "")
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise CohortParseError(
            f"row {row + 2}, column {column!r}: cannot parse {df[column].iloc[row]!r} as a number"
        )
    if not allow_empty and (raw == "").any():
        row = int(np.flatnonzero((raw == "").to_numpy())[0])
        raise CohortValidationError(f"row {row + 2}, column {column!r}: missing value")
    return values.to_numpy(dtype=np.float64)


def _label_column(df: pd.DataFrame, column: str) -> np.ndarray:
    values = _numeric_column(df, column, allow_empty=False)
    bad = ~np.isin(values, (0.0, 1.0))
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise CohortValidationError(
            f"row {row + 2}, column {column!r}: label {df[column].iloc[row]!r} is not binary"
        )
    return values.astype(np.int64)


def _covariate_names(df: pd.DataFrame, schema: ColumnSchema) -> List[str]:
    names = list(schema.covariate_columns)
    missing = [c for c in names if c not in df.columns]
    if missing:
        raise CohortValidationError(f"Covariate columns not found: {', '.join(missing)}")
    for interval in (MONTHS_FU1, MONTHS_FU2):
        if interval in df.columns and interval not in names:
            names.append(interval)
    return names


def _patient_ids(df: pd.DataFrame) -> Tuple[str, ...]:
    ids = df[PATIENT_ID_COLUMN].str.strip()
    if (ids == "").any():
        row = int(np.flatnonzero((ids == "").to_numpy())[0])
        raise CohortValidationError(f"row {row + 2}: empty patient_id")
    dup = ids[ids.duplicated()]
    if not dup.empty:
        raise CohortValidationError(f"Duplicate patient_id {dup.iloc[0]!r}")
    return tuple(ids)


def load_cohort(path: str | Path, schema: ColumnSchema = ColumnSchema()) -> Cohort:
    """Load and validate a wide-format cohort CSV.

    Patients with a missing baseline cell are dropped (and logged); patients
    without ``fu1_`` values are kept with their first follow-up block absent.
    """
    log.debug(f"Loading cohort from {path}")
    df = _read_frame(path)
    required = [PATIENT_ID_COLUMN, *LABEL_COLUMNS]
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise CohortParseError(f"{path}: header lacks required columns {', '.join(missing)}")

    base_cols = [c for c in df.columns if c.startswith(schema.baseline_prefix)]
    fu1_cols = [c for c in df.columns if c.startswith(schema.fu1_prefix)]
    if not base_cols:
        raise CohortParseError(f"{path}: no baseline columns with prefix {schema.baseline_prefix!r}")
    cov_cols = _covariate_names(df, schema)

    ids = _patient_ids(df)
    baseline = np.column_stack([_numeric_column(df, c, allow_empty=True) for c in base_cols])
    incomplete = np.isnan(baseline).any(axis=1)
    if incomplete.any():
        dropped = [ids[i] for i in np.flatnonzero(incomplete)]
        log.warning(f"Rejecting {len(dropped)} patient(s) with missing baseline cells: {', '.join(dropped)}")

    keep = ~incomplete
    fu1 = (
        np.column_stack([_numeric_column(df, c, allow_empty=True) for c in fu1_cols])
        if fu1_cols else np.zeros((len(df), 0))
    )
    covariates = (
        np.column_stack([_numeric_column(df, c, allow_empty=False) for c in cov_cols])
        if cov_cols else np.zeros((len(df), 0))
    )
    y1 = _label_column(df, "y1")
    y2 = _label_column(df, "y2")

    cohort = Cohort(
        patient_ids=tuple(p for p, k in zip(ids, keep) if k),
        baseline=baseline[keep],
        fu1=fu1[keep],
        covariates=covariates[keep],
        y1=y1[keep],
        y2=y2[keep],
        feature_names_baseline=tuple(base_cols),
        feature_names_fu1=tuple(fu1_cols),
        covariate_names=tuple(cov_cols),
    )
    log.info(
        f"Loaded cohort {path}: {cohort.n_patients} patients, M={cohort.n_features}, "
        f"fu1 present for {int(cohort.has_fu1.sum())}, covariates={list(cohort.covariate_names)}"
    )
    return cohort


def load_baseline_table(
        path: str | Path,
        feature_names: Sequence[str],
        covariate_names: Sequence[str] = (),
) -> UnlabeledCohort:
    """Load patients that only have baseline features (and covariates)."""
    df = _read_frame(path)
    if PATIENT_ID_COLUMN not in df.columns:
        raise CohortParseError(f"{path}: header lacks required column {PATIENT_ID_COLUMN}")
    missing = [c for c in [*feature_names, *covariate_names] if c not in df.columns]
    if missing:
        raise CohortValidationError(f"{path}: columns not found: {', '.join(missing)}")
    ids = _patient_ids(df)
    baseline = np.column_stack([_numeric_column(df, c, allow_empty=False) for c in feature_names])
    covariates = (
        np.column_stack([_numeric_column(df, c, allow_empty=False) for c in covariate_names])
        if covariate_names else np.zeros((len(df), 0))
    )
    log.info(f"Loaded {len(ids)} unlabeled patient(s) from {path}")
    return UnlabeledCohort(
        patient_ids=ids,
        baseline=_frozen(baseline),
        covariates=_frozen(covariates),
        feature_names_baseline=tuple(feature_names),
        covariate_names=tuple(covariate_names),
    )


def write_cohort(cohort: Cohort, path: str | Path) -> None:
    """Write ``cohort`` in the format read by :func:`load_cohort`."""
    data: dict[str, object] = {PATIENT_ID_COLUMN: list(cohort.patient_ids), "y1": cohort.y1, "y2": cohort.y2}
    for j, name in enumerate(cohort.covariate_names):
        data[name] = cohort.covariates[:, j]
    for j, name in enumerate(cohort.feature_names_baseline):
        data[name] = cohort.baseline[:, j]
    for j, name in enumerate(cohort.feature_names_fu1):
        data[name] = cohort.fu1[:, j]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(data).to_csv(path, index=False, na_rep="", lineterminator="\n", encoding="utf-8")
    log.info(f"Wrote cohort of {cohort.n_patients} patients to {path}")


def filter_by_followup_interval(
        cohort: Cohort,
        max_months_fu1: float = 20.0,
        max_months_between: float = 20.0,
) -> Cohort:
    """Keep patients whose follow-ups happen within the allowed intervals.

    The first follow-up must occur within ``max_months_fu1`` of baseline and
    the second within ``max_months_between`` of the first.
    """
    for name in (MONTHS_FU1, MONTHS_FU2):
        if name not in cohort.covariate_names:
            raise CohortValidationError(f"Follow-up filter requires the {name!r} column")
    m1 = cohort.covariates[:, cohort.covariate_names.index(MONTHS_FU1)]
    m2 = cohort.covariates[:, cohort.covariate_names.index(MONTHS_FU2)]
    keep = (m1 <= max_months_fu1) & (m2 - m1 <= max_months_between)
    log.info(
        f"Follow-up interval filter kept {int(keep.sum())}/{cohort.n_patients} patients "
        f"(fu1 <= {max_months_fu1} months, fu2 - fu1 <= {max_months_between} months)"
    )
    return cohort.subset(np.flatnonzero(keep))


# ---------------------------------------------------------------------------
# --- Split plans -----------------------------------------------------------
# ---------------------------------------------------------------------------

def _stratum_name(code: int) -> str:
    return f"(y1={code // 2}, y2={code % 2})"


def _draw_plan(
        strata: Sequence[Tuple[int, np.ndarray]],
        n_patients: int,
        n_splits: int,
        test_fraction: float,
        rng: np.random.Generator,
) -> Tuple[Tuple[np.ndarray, np.ndarray], ...]:
    all_idx = np.arange(n_patients)
    splits = []
    for _ in range(n_splits):
        test_parts = []
        for _, members in strata:
            n_test = min(max(round_half_up(test_fraction * len(members)), 1), len(members) - 1)
            test_parts.append(rng.choice(members, size=n_test, replace=False))
        test = np.sort(np.concatenate(test_parts))
        train = np.setdiff1d(all_idx, test, assume_unique=True)
        test.flags.writeable = False
        train.flags.writeable = False
        splits.append((train, test))
    return tuple(splits)


def make_splits(
        cohort: Cohort,
        n_splits: int,
        test_fraction: float,
        seed: int,
        min_occurrences: int = DEFAULT_MIN_OCCURRENCES,
        max_retries: int = DEFAULT_MAX_RETRIES,
) -> SplitPlan:
    """Draw ``n_splits`` train/test partitions stratified on the joint (y1, y2) label.

    Each plan must put every patient in at least ``min_occurrences`` test
    sets; a violating plan is re-drawn with a fresh sub-seed up to
    ``max_retries`` times.
    """
    if not 0.0 < test_fraction < 1.0:
        raise SplitPlanError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    if n_splits < 1:
        raise SplitPlanError(f"n_splits must be >= 1, got {n_splits}")

    codes = cohort.strata
    strata = [(int(c), np.flatnonzero(codes == c)) for c in np.unique(codes)]
    for code, members in strata:
        if len(members) < 2:
            raise SplitPlanError(f"Stratum {_stratum_name(code)} has {len(members)} patient(s); at least 2 required")
    if n_splits < min_occurrences:
        raise SplitPlanError(
            f"min_occurrences={min_occurrences} is unsatisfiable with only {n_splits} split(s)"
        )

    for attempt in range(max_retries + 1):
        rng = np.random.default_rng(derive_seed(seed, "splits", attempt))
        splits = _draw_plan(strata, cohort.n_patients, n_splits, test_fraction, rng)
        plan = SplitPlan(
            splits=splits,
            test_fraction=test_fraction,
            seed=seed,
            n_patients=cohort.n_patients,
            min_occurrences=min_occurrences,
            attempt=attempt,
        )
        counts = plan.test_counts()
        if counts.min() >= min_occurrences:
            log.info(
                f"Split plan: {n_splits} splits, test_fraction={test_fraction}, attempt={attempt}, "
                f"test occurrences min={counts.min()} mean={counts.mean():.1f}"
            )
            return plan
        log.debug(f"Split plan attempt {attempt}: {int((counts < min_occurrences).sum())} patient(s) under-sampled")

    log.error(f"Could not satisfy min_occurrences={min_occurrences} after {max_retries} retries")
    raise SplitPlanError(
        f"min_occurrences={min_occurrences} unsatisfiable after {max_retries} retries "
        f"(n_splits={n_splits}, test_fraction={test_fraction})"
    )


def make_loo_splits(cohort: Cohort) -> SplitPlan:
    """Leave-one-out plan: one split per patient."""
    n = cohort.n_patients
    if n < 2:
        raise SplitPlanError("Leave-one-out needs at least 2 patients")
    all_idx = np.arange(n)
    splits = []
    for j in range(n):
        test = np.array([j])
        train = np.delete(all_idx, j)
        test.flags.writeable = False
        train.flags.writeable = False
        splits.append((train, test))
    return SplitPlan(
        splits=tuple(splits), test_fraction=1.0 / n, seed=0, n_patients=n, min_occurrences=1, kind="loo"
    )


# ---------------------------------------------------------------------------
# --- Normalization ---------------------------------------------------------
# ---------------------------------------------------------------------------

def fit_normalizer(
        cohort: Cohort,
        indices: Sequence[int] | np.ndarray,
        columns: FeatureSelector = "baseline",
) -> Normalizer:
    """Per-feature min/max over the training rows ``indices`` only."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("fit_normalizer needs at least one training row")
    return Normalizer.from_matrix(cohort.select(columns)[idx])


def apply_normalizer(norm: Normalizer, rows: np.ndarray) -> np.ndarray:
    """Map rows into [0, 1]: (x - min) / (max - min), clipped; constant features map to 0."""
    X = as_matrix(rows, "rows")
    if X.shape[1] != norm.n_features:
        raise ValueError(f"Normalizer expects {norm.n_features} columns, got {X.shape[1]}")
    span = norm.maximum - norm.minimum
    constant = span == 0
    safe = np.where(constant, 1.0, span)
    out = np.clip((X - norm.minimum) / safe, 0.0, 1.0)
    out[:, constant] = 0.0
    return out
