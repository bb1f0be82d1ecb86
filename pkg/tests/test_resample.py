# tests/test_resample.py
import numpy as np
import pytest
from pydantic import ValidationError

from app.services.core.errors import ResampleError
from app.services.models.resample import (
    ImbalanceStrategy,
    inverse_frequency_weights,
    rebalance,
    smote_oversample,
)


def _imbalanced(n_min: int = 11, n_maj: int = 36, seed: int = 0):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(0.0, 1.0, (n_maj, 3)), rng.normal(2.0, 1.0, (n_min, 3))])
    y = np.array([0] * n_maj + [1] * n_min)
    return X, y


def _on_some_segment(row: np.ndarray, originals: np.ndarray, tol: float = 1e-10) -> bool:
    for a in originals:
        d = originals - a
        norms = (d ** 2).sum(axis=1)
        ok = norms > 0
        t = ((row - a) @ d[ok].T) / norms[ok]
        inside = (t >= -tol) & (t <= 1 + tol)
        resid = np.linalg.norm(a + t[:, None] * d[ok] - row, axis=1)
        if np.any(inside & (resid <= tol)):
            return True
        if np.linalg.norm(row - a) <= tol:
            return True
    return False


def test_inverse_frequency_weights():
    y = np.array([0, 0, 0, 1])
    s = inverse_frequency_weights(y)
    np.testing.assert_allclose(s, [4 / 6, 4 / 6, 4 / 6, 2.0])
    assert s.sum() == pytest.approx(len(y))


def test_inverse_frequency_needs_both_classes():
    with pytest.raises(ResampleError):
        inverse_frequency_weights(np.zeros(4, dtype=int))


def test_smote_balances_classes_and_keeps_originals():
    X, y = _imbalanced()
    X_res, y_res = smote_oversample(X, y, ImbalanceStrategy(kind="smote", seed=3))

    assert np.bincount(y_res).tolist() == [36, 36]
    np.testing.assert_array_equal(X_res[: len(y)], X)
    np.testing.assert_array_equal(y_res[: len(y)], y)


def test_smote_rows_lie_between_minority_originals():
    X, y = _imbalanced()
    X_res, y_res = smote_oversample(X, y, ImbalanceStrategy(kind="smote", seed=3))
    minority = X[y == 1]
    synthetic = X_res[len(y):]
    assert (y_res[len(y):] == 1).all()
    assert all(_on_some_segment(row, minority) for row in synthetic)


def test_smote_target_ratio():
    X, y = _imbalanced()
    _, y_res = smote_oversample(X, y, ImbalanceStrategy(kind="smote", smote_target_ratio=0.5))
    assert np.bincount(y_res).tolist() == [36, 18]


def test_smote_truncates_neighbours_for_tiny_minority():
    X, y = _imbalanced(n_min=3, n_maj=10)
    _, y_res = smote_oversample(X, y, ImbalanceStrategy(kind="smote", smote_k=5))
    assert np.bincount(y_res).tolist() == [10, 10]


def test_smote_needs_two_minority_rows():
    X, y = _imbalanced(n_min=1, n_maj=10)
    with pytest.raises(ResampleError, match="at least 2 minority"):
        smote_oversample(X, y, ImbalanceStrategy(kind="smote"))


def test_smote_is_deterministic_per_seed():
    X, y = _imbalanced()
    a, _ = smote_oversample(X, y, ImbalanceStrategy(kind="smote", seed=11))
    b, _ = smote_oversample(X, y, ImbalanceStrategy(kind="smote", seed=11))
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("kind", ["none", "inverse_frequency", "smote"])
def test_rebalance_single_class_fold_passes_through(kind):
    X = np.ones((4, 2))
    X_out, y_out, s = rebalance(X, np.zeros(4, dtype=int), ImbalanceStrategy(kind=kind))
    assert X_out.shape == (4, 2)
    np.testing.assert_array_equal(s, np.ones(4))


def test_rebalance_returns_weights_per_strategy():
    X, y = _imbalanced()
    _, _, s_none = rebalance(X, y, ImbalanceStrategy())
    _, _, s_inv = rebalance(X, y, ImbalanceStrategy(kind="inverse_frequency"))
    X_sm, y_sm, s_sm = rebalance(X, y, ImbalanceStrategy(kind="smote"))
    assert (s_none == 1).all()
    assert s_inv[y == 1][0] == pytest.approx(len(y) / (2 * 11))
    assert len(s_sm) == len(y_sm) == X_sm.shape[0] == 72


def test_strategy_is_validated():
    with pytest.raises(ValidationError):
        ImbalanceStrategy(kind="undersample")
    with pytest.raises(ValidationError):
        ImbalanceStrategy(kind="smote", smote_k=0)
