# tests/test_tabular.py
import numpy as np
import pytest

from app.services.core.errors import CohortParseError, CohortValidationError, SplitPlanError
from app.services.core.utils import round_half_up
from app.services.data.tabular import (
    Cohort,
    ColumnSchema,
    Normalizer,
    apply_normalizer,
    filter_by_followup_interval,
    fit_normalizer,
    load_baseline_table,
    load_cohort,
    make_loo_splits,
    make_splits,
    write_cohort,
)

HEADER = "patient_id,y1,y2,age,months_fu1,months_fu2,base_a,base_b,fu1_a,fu1_b\n"


def _write(tmp_path, rows, header=HEADER, name="c.csv"):
    path = tmp_path / name
    path.write_text(header + "".join(r + "\n" for r in rows), encoding="utf-8")
    return path


def _tiny_cohort(strata_sizes):
    """Cohort with the given number of patients per (y1, y2) code 0..3."""
    y1, y2 = [], []
    for code, size in enumerate(strata_sizes):
        y1 += [code // 2] * size
        y2 += [code % 2] * size
    n = len(y1)
    rng = np.random.default_rng(0)
    return Cohort(
        patient_ids=tuple(f"P{j}" for j in range(n)),
        baseline=rng.normal(size=(n, 2)),
        fu1=np.zeros((n, 0)),
        covariates=np.zeros((n, 0)),
        y1=np.array(y1),
        y2=np.array(y2),
        feature_names_baseline=("base_a", "base_b"),
    )


# ---------------------------------------------------------------------------
# --- load_cohort -----------------------------------------------------------
# ---------------------------------------------------------------------------

def test_load_cohort_blocks_and_missing_fu1(tmp_path):
    path = _write(tmp_path, [
        "P1,0,0,50,6,12,1.0,2.0,1.5,2.5",
        "P2,1,1,61,7,15,0.5,-1.0,,",
        "P3,1,0,44,5,11,0.0,3.0,0.1,2.9",
    ])
    cohort = load_cohort(path, ColumnSchema(covariate_columns=("age",)))

    assert cohort.patient_ids == ("P1", "P2", "P3")
    assert cohort.feature_names_baseline == ("base_a", "base_b")
    assert cohort.feature_names_fu1 == ("fu1_a", "fu1_b")
    assert cohort.covariate_names == ("age", "months_fu1", "months_fu2")
    assert cohort.has_fu1.tolist() == [True, False, True]
    assert np.isnan(cohort.fu1[1]).all()
    assert cohort.records[1].fu1 is None
    assert cohort.strata.tolist() == [0, 3, 2]
    np.testing.assert_array_equal(cohort.baseline[0], [1.0, 2.0])


def test_load_cohort_rejects_non_binary_label(tmp_path):
    path = _write(tmp_path, ["P1,0,2,50,6,12,1.0,2.0,1.5,2.5"])
    with pytest.raises(CohortValidationError, match="y2"):
        load_cohort(path)


def test_load_cohort_reports_row_and_column_of_bad_cell(tmp_path):
    path = _write(tmp_path, [
        "P1,0,0,50,6,12,1.0,2.0,1.5,2.5",
        "P2,1,1,61,7,15,abc,-1.0,,",
    ])
    with pytest.raises(CohortParseError, match=r"row 3, column 'base_a'"):
        load_cohort(path)


def test_load_cohort_rejects_duplicate_ids(tmp_path):
    path = _write(tmp_path, [
        "P1,0,0,50,6,12,1.0,2.0,1.5,2.5",
        "P1,1,1,61,7,15,0.5,-1.0,,",
    ])
    with pytest.raises(CohortValidationError, match="Duplicate"):
        load_cohort(path)


def test_load_cohort_drops_patients_with_missing_baseline(tmp_path):
    path = _write(tmp_path, [
        "P1,0,0,50,6,12,1.0,2.0,1.5,2.5",
        "P2,1,1,61,7,15,,-1.0,,",
        "P3,1,0,44,5,11,0.0,3.0,0.1,2.9",
    ])
    cohort = load_cohort(path)
    assert cohort.patient_ids == ("P1", "P3")


def test_load_cohort_requires_label_columns(tmp_path):
    path = _write(tmp_path, ["P1,0,1.0"], header="patient_id,y1,base_a\n")
    with pytest.raises(CohortParseError, match="y2"):
        load_cohort(path)


def test_load_cohort_rejects_partial_fu1(tmp_path):
    path = _write(tmp_path, ["P1,0,0,50,6,12,1.0,2.0,1.5,"])
    with pytest.raises(CohortValidationError, match="partially missing"):
        load_cohort(path)


def test_write_cohort_is_read_back_identically(tmp_path, cohort_csv):
    cohort = load_cohort(cohort_csv, ColumnSchema(covariate_columns=("age",)))
    out = tmp_path / "copy.csv"
    write_cohort(cohort, out)
    again = load_cohort(out, ColumnSchema(covariate_columns=("age",)))

    assert again.patient_ids == cohort.patient_ids
    np.testing.assert_allclose(again.baseline, cohort.baseline, rtol=1e-12)
    np.testing.assert_allclose(again.fu1, cohort.fu1, rtol=1e-12)
    np.testing.assert_allclose(again.covariates, cohort.covariates, rtol=1e-12)
    np.testing.assert_array_equal(again.strata, cohort.strata)


def test_load_baseline_table(tmp_path):
    path = _write(tmp_path, ["N1,0.1,0.2", "N2,0.3,0.4"], header="patient_id,base_a,base_b\n")
    patients = load_baseline_table(path, ("base_a", "base_b"))
    assert patients.n_patients == 2
    np.testing.assert_allclose(patients.baseline, [[0.1, 0.2], [0.3, 0.4]])


# ---------------------------------------------------------------------------
# --- Cohort views ----------------------------------------------------------
# ---------------------------------------------------------------------------

def test_cohort_arrays_are_read_only(synth_cohort):
    with pytest.raises(ValueError):
        synth_cohort.baseline[0, 0] = 1.0


def test_covariates_for_drops_the_other_interval(cohort_csv):
    cohort = load_cohort(cohort_csv, ColumnSchema(covariate_columns=("age",)))
    _, names_y1 = cohort.covariates_for("y1")
    _, names_y2 = cohort.covariates_for("y2")
    assert names_y1 == ("age", "months_fu1")
    assert names_y2 == ("age", "months_fu2")


def test_select_by_column_names(cohort_csv):
    cohort = load_cohort(cohort_csv, ColumnSchema(covariate_columns=("age",)))
    X = cohort.select(["base_1", "age"])
    assert X.shape == (cohort.n_patients, 2)
    np.testing.assert_array_equal(X[:, 0], cohort.baseline[:, 0])
    with pytest.raises(KeyError):
        cohort.select(["nope"])


def test_filter_by_followup_interval(tmp_path):
    path = _write(tmp_path, [
        "P1,0,0,50,6,12,1.0,2.0,1.5,2.5",
        "P2,1,1,61,25,30,0.5,-1.0,,",
        "P3,1,0,44,5,40,0.0,3.0,0.1,2.9",
    ])
    kept = filter_by_followup_interval(load_cohort(path), max_months_fu1=20, max_months_between=20)
    assert kept.patient_ids == ("P1",)


# ---------------------------------------------------------------------------
# --- Split plans -----------------------------------------------------------
# ---------------------------------------------------------------------------

def test_split_plan_is_stratified_and_partitions(synth_cohort, synth_plan):
    strata = synth_cohort.strata
    sizes = np.bincount(strata, minlength=4)
    for train, test in synth_plan:
        assert np.intersect1d(train, test).size == 0
        assert np.union1d(train, test).size == synth_cohort.n_patients
        test_sizes = np.bincount(strata[test], minlength=4)
        for code, n_s in enumerate(sizes):
            if n_s:
                assert test_sizes[code] == min(max(round_half_up(0.4 * n_s), 1), n_s - 1)


def test_split_plan_meets_min_occurrences(synth_plan):
    assert synth_plan.test_counts().min() >= synth_plan.min_occurrences
    assert len(synth_plan) == 20


def test_split_plan_is_deterministic(synth_cohort):
    a = make_splits(synth_cohort, 10, 0.4, seed=3, min_occurrences=1)
    b = make_splits(synth_cohort, 10, 0.4, seed=3, min_occurrences=1)
    c = make_splits(synth_cohort, 10, 0.4, seed=4, min_occurrences=1)
    assert all(np.array_equal(x[1], y[1]) for x, y in zip(a, b))
    assert not all(np.array_equal(x[1], y[1]) for x, y in zip(a, c))


def test_split_plan_rejects_single_patient_stratum():
    cohort = _tiny_cohort([5, 1, 5, 5])
    with pytest.raises(SplitPlanError, match=r"\(y1=0, y2=1\)"):
        make_splits(cohort, 10, 0.4, seed=0, min_occurrences=1)


def test_split_plan_ignores_empty_stratum():
    cohort = _tiny_cohort([6, 0, 6, 6])
    plan = make_splits(cohort, 10, 0.4, seed=0, min_occurrences=1)
    assert all(test.size == 3 * round_half_up(0.4 * 6) for _, test in plan)


def test_split_plan_unsatisfiable_min_occurrences(synth_cohort):
    with pytest.raises(SplitPlanError, match="unsatisfiable"):
        make_splits(synth_cohort, 3, 0.4, seed=0, min_occurrences=5)


def test_loo_splits():
    cohort = _tiny_cohort([2, 2, 2, 2])
    plan = make_loo_splits(cohort)
    assert len(plan) == cohort.n_patients
    assert plan.kind == "loo"
    assert plan.test_counts().tolist() == [1] * cohort.n_patients


# ---------------------------------------------------------------------------
# --- Normalization ---------------------------------------------------------
# ---------------------------------------------------------------------------

def test_normalizer_uses_training_rows_only(synth_cohort):
    train = np.arange(10)
    norm = fit_normalizer(synth_cohort, train)
    np.testing.assert_array_equal(norm.minimum, synth_cohort.baseline[train].min(axis=0))
    np.testing.assert_array_equal(norm.maximum, synth_cohort.baseline[train].max(axis=0))

    out = apply_normalizer(norm, synth_cohort.baseline)
    assert out.min() >= 0.0 and out.max() <= 1.0
    assert np.isclose(apply_normalizer(norm, synth_cohort.baseline[train]).max(axis=0), 1.0).all()


def test_normalizer_constant_feature_maps_to_zero():
    norm = Normalizer.from_matrix(np.array([[1.0, 2.0], [1.0, 4.0]]))
    out = apply_normalizer(norm, np.array([[1.0, 3.0], [7.0, 5.0]]))
    np.testing.assert_array_equal(out, [[0.0, 0.5], [0.0, 1.0]])


def test_normalizer_column_mismatch():
    norm = Normalizer.from_matrix(np.ones((3, 2)))
    with pytest.raises(ValueError, match="expects 2 columns"):
        apply_normalizer(norm, np.ones((3, 3)))
