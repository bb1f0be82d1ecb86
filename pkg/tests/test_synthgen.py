# tests/test_synthgen.py
import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

from app.services.core.errors import ConfigError, DensityError
from app.services.data.synthgen import (
    FeatureDistribution,
    SynthConfig,
    TransitionRules,
    assign_labels,
    format_transition_matrix,
    generate,
    standardize,
    transition_matrix,
)


def _scores():
    rng = np.random.default_rng(0)
    return np.concatenate([
        rng.uniform(-2.5, -1.01, 10),   # extreme low
        rng.uniform(-0.99, -0.01, 7),   # moderate negative
        rng.uniform(0.01, 0.99, 10),    # moderate positive
        rng.uniform(1.01, 2.5, 4),      # extreme high
    ])


def test_transition_rule_counts_are_exact():
    scores = _scores()
    y1, y2 = assign_labels(scores, TransitionRules(), np.random.default_rng(1))

    np.testing.assert_array_equal(y1, (scores >= 0).astype(int))
    assert y2[:10].sum() == 9
    assert y2[10:17].sum() == 0
    assert y2[17:27].sum() == 5
    assert y2[27:].sum() == 4


@pytest.mark.parametrize("p_low, p_pos, expect_low, expect_pos_stable", [(0.0, 1.0, 0, 10), (1.0, 0.0, 10, 0), (0.25, 0.25, 3, 3)])
def test_transition_rule_probabilities(p_low, p_pos, expect_low, expect_pos_stable):
    scores = _scores()
    rules = TransitionRules(p_extreme_low_to_progressive=p_low, p_moderate_pos_to_stable=p_pos)
    _, y2 = assign_labels(scores, rules, np.random.default_rng(2))
    assert y2[:10].sum() == expect_low
    assert 10 - y2[17:27].sum() == expect_pos_stable


def test_standardize_spans_minus_one_to_one():
    X = np.random.default_rng(0).normal(size=(50, 3))
    out = standardize(X, ["a", "b", "c"])
    np.testing.assert_allclose(out.min(axis=0), -1.0)
    np.testing.assert_allclose(out.max(axis=0), 1.0)
    with pytest.raises(DensityError, match="'b'"):
        standardize(np.column_stack([X[:, 0], np.ones(50)]), ["a", "b"])


def test_default_cohort_shape_and_balance():
    cohort = generate(SynthConfig())
    assert cohort.n_patients == 300
    assert cohort.feature_names_baseline == ("base_1", "base_2", "base_3", "base_4", "base_5")
    assert cohort.patient_ids[0] == "P0001"
    assert abs(cohort.y1.mean() - 0.5) <= 0.10
    assert transition_matrix(cohort).sum() == 300
    assert not cohort.has_fu1.any()


def test_generation_is_deterministic():
    a = generate(SynthConfig(n_patients=50, seed=4))
    b = generate(SynthConfig(n_patients=50, seed=4))
    c = generate(SynthConfig(n_patients=50, seed=5))
    np.testing.assert_array_equal(a.baseline, b.baseline)
    np.testing.assert_array_equal(a.y2, b.y2)
    assert not np.array_equal(a.baseline, c.baseline)


def test_custom_feature_distributions():
    config = SynthConfig(
        n_patients=40,
        n_features=2,
        alpha=(1.0, 0.5),
        features=(FeatureDistribution(name="normal", params={"loc": 0.0, "scale": 2.0}), FeatureDistribution()),
    )
    cohort = generate(config)
    assert cohort.n_features == 2
    assert cohort.baseline.min() == pytest.approx(-1.0)


def test_seed_sample_source(tmp_path):
    rng = np.random.default_rng(0)
    path = tmp_path / "seed.csv"
    pd.DataFrame(rng.normal(size=(30, 5)), columns=list("abcde")).to_csv(path, index=False)
    cohort = generate(SynthConfig(n_patients=60, seed_sample_path=path))
    assert cohort.baseline.shape == (60, 5)


def test_seed_sample_errors(tmp_path):
    rng = np.random.default_rng(0)
    short = tmp_path / "short.csv"
    pd.DataFrame(rng.normal(size=(5, 5))).to_csv(short, index=False)
    with pytest.raises(ConfigError, match="rows"):
        generate(SynthConfig(n_patients=20, seed_sample_path=short))

    constant = tmp_path / "constant.csv"
    frame = pd.DataFrame(rng.normal(size=(20, 5)), columns=list("abcde"))
    frame["c"] = 1.0
    frame.to_csv(constant, index=False)
    with pytest.raises(DensityError, match="'c'"):
        generate(SynthConfig(n_patients=20, seed_sample_path=constant))


def test_config_validation():
    with pytest.raises(ValidationError, match="alpha"):
        SynthConfig(n_features=3)
    with pytest.raises(ValidationError):
        SynthConfig(n_patients=5)
    with pytest.raises(ValidationError):
        FeatureDistribution(name="not_a_distribution")
    with pytest.raises(ValidationError):
        TransitionRules(p_extreme_low_to_progressive=1.5)


def test_format_transition_matrix():
    text = format_transition_matrix(np.array([[10, 2], [3, 5]]))
    lines = text.splitlines()
    assert lines[0].split() == ["y2=0", "y2=1"]
    assert lines[1].split() == ["y1=0", "10", "2"]
    assert lines[2].split() == ["y1=1", "3", "5"]


@pytest.mark.parametrize("name", ["shuffle", "spawn", "bit_generator", "permutation", "integers"])
def test_non_distribution_generator_attributes_are_rejected(name):
    with pytest.raises(ValidationError, match="Unknown distribution"):
        FeatureDistribution(name=name)


def test_bad_distribution_params_raise_config_error():
    config = SynthConfig(n_patients=20, n_features=1, alpha=(1.0,), features=(FeatureDistribution(name="normal", params={"mean": 0.0}),))
    with pytest.raises(ConfigError, match="'normal'"):
        generate(config)


def test_default_source_puts_few_scores_below_minus_one():
    cohort = generate(SynthConfig())
    scores = cohort.baseline @ np.asarray(SynthConfig().alpha)
    assert (scores < -1.0).mean() < 0.15
