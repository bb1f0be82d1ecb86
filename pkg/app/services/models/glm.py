# app/services/models/glm.py
"""L1-penalized logistic regression with per-sample weights.

Minimizes ``J(w, b) = ||w||_1 + C * sum_i s_i * l(y_i, sigmoid(w . x_i + b))``
with an unpenalized intercept, by cyclic coordinate descent. Each coordinate
tries a proximal Newton step and falls back to the step of a quadratic
majorizer (curvature bound ``C/4 * sum s x^2``), which never increases J.
The intercept is solved to stationarity at the end of every pass.

A fit counts as converged once the relative objective decrease of a pass is
below ``tol`` and the subgradient optimality residual is at most ``KKT_TOL``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.special import expit, logit

from ..core.config import log
from ..core.constants import DEFAULT_C, DEFAULT_MAX_ITER, DEFAULT_THRESHOLD, DEFAULT_TOL, KKT_TOL, PROBA_CLIP
from ..core.errors import ModelFitError
from ..core.utils import as_matrix

# Allowed objective increase across an outer pass (floating-point slack)
_MONOTONE_SLACK = 1e-9
_INTERCEPT_NEWTON_STEPS = 50


# ---------------------------------------------------------------------------
# --- Model -----------------------------------------------------------------
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LogisticModel:
    weights: np.ndarray
    intercept: float
    C: float
    converged: bool
    n_iters: int
    degenerate: bool = False
    objective: float = float("nan")
    kkt: float = float("nan")
    objective_path: Tuple[float, ...] = ()

    @property
    def n_features(self) -> int:
        return int(self.weights.shape[0])

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return predict_proba(self, X)

    def predict_label(self, X: np.ndarray, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
        return predict_label(self, X, threshold)


# ---------------------------------------------------------------------------
# --- Objective helpers -----------------------------------------------------
# ---------------------------------------------------------------------------

def _weighted_loss(z: np.ndarray, y: np.ndarray, s: np.ndarray) -> float:
    # log(1 + e^z) - y z  is the cross-entropy of sigmoid(z) against y
    return float(np.dot(s, np.logaddexp(0.0, z) - y * z))


def objective(
        weights: np.ndarray,
        intercept: float,
        X: np.ndarray,
        y: np.ndarray,
        sample_weights: np.ndarray,
        C: float,
) -> float:
    """Penalized objective J(w, b)."""
    z = as_matrix(X) @ np.asarray(weights, dtype=np.float64) + intercept
    return float(np.abs(weights).sum()) + C * _weighted_loss(z, np.asarray(y, dtype=np.float64), sample_weights)


def smooth_gradient(
        weights: np.ndarray,
        intercept: float,
        X: np.ndarray,
        y: np.ndarray,
        sample_weights: np.ndarray,
        C: float,
) -> Tuple[np.ndarray, float]:
    """Gradient of the smooth part ``C * sum s_i l_i`` with respect to (w, b)."""
    X = as_matrix(X)
    r = C * np.asarray(sample_weights) * (expit(X @ weights + intercept) - np.asarray(y, dtype=np.float64))
    return X.T @ r, float(r.sum())


def kkt_residual(
        weights: np.ndarray,
        intercept: float,
        X: np.ndarray,
        y: np.ndarray,
        sample_weights: np.ndarray,
        C: float,
) -> float:
    """Largest violation of the optimality conditions of J.

    ``|dJ/db|`` for the intercept, ``|g_j + sign(w_j)|`` for non-zero weights
    and ``max(|g_j| - 1, 0)`` for zero weights; 0 exactly at the optimum.
    """
    w = np.asarray(weights, dtype=np.float64)
    g_w, g_b = smooth_gradient(w, intercept, X, y, sample_weights, C)
    per_weight = np.where(w != 0.0, np.abs(g_w + np.sign(w)), np.maximum(np.abs(g_w) - 1.0, 0.0))
    return float(max(abs(g_b), per_weight.max(initial=0.0)))


def _soft_threshold(value: float, alpha: float) -> float:
    return float(np.sign(value) * max(abs(value) - alpha, 0.0))


def _check_inputs(X: np.ndarray, y: np.ndarray, weights: np.ndarray | None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    X = as_matrix(X)
    y = np.asarray(y, dtype=np.float64).ravel()
    n = X.shape[0]
    if y.shape[0] != n:
        raise ModelFitError(f"X has {n} rows but y has {y.shape[0]} entries")
    if n < 2:
        raise ModelFitError(f"Need at least 2 training rows, got {n}")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ModelFitError("y must be binary (0/1)")
    s = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64).ravel()
    if s.shape[0] != n:
        raise ModelFitError(f"Sample weights have length {s.shape[0]}, expected {n}")
    if not (np.isfinite(X).all() and np.isfinite(s).all()):
        log.error("Non-finite values passed to fit_l1_logistic")
        raise ModelFitError("Non-finite values in X or sample weights")
    if (s < 0).any() or not (s > 0).any():
        raise ModelFitError("Sample weights must be non-negative and not all zero")
    return X, y, s


def _solve_intercept(z: np.ndarray, y: np.ndarray, s: np.ndarray, C: float, lipschitz_b: float) -> float:
    """Newton iterations on the intercept alone; returns the total shift applied to ``z``."""
    shift = 0.0
    loss = _weighted_loss(z, y, s)
    for _ in range(_INTERCEPT_NEWTON_STEPS):
        p = expit(z + shift)
        g_b = C * np.dot(s, p - y)
        if abs(g_b) <= KKT_TOL * 1e-2:
            break
        h_b = C * np.dot(s, p * (1.0 - p))
        step = -g_b / lipschitz_b
        if h_b > 0.0:
            newton_loss = _weighted_loss(z + shift - g_b / h_b, y, s)
            if newton_loss <= loss:
                step = -g_b / h_b
        shift += step
        loss = _weighted_loss(z + shift, y, s)
    return shift


# ---------------------------------------------------------------------------
# --- Fit -------------------------------------------------------------------
# ---------------------------------------------------------------------------

def fit_l1_logistic(
        X: np.ndarray,
        y: np.ndarray,
        weights: np.ndarray | None = None,
        C: float = DEFAULT_C,
        tol: float = DEFAULT_TOL,
        max_iter: int = DEFAULT_MAX_ITER,
) -> LogisticModel:
    """Fit an L1-penalized, sample-weighted logistic regression.

    Parameters
    ----------
    X : ndarray, shape (n, d)
        Training features (normally min-max scaled into [0, 1]).
    y : ndarray, shape (n,)
        Binary targets.
    weights : ndarray, shape (n,), optional
        Non-negative sample weights; unit weights when omitted.
    C : float
        Inverse regularization strength.
    tol : float
        Threshold on the relative objective decrease per outer pass. A pass
        below it ends the fit only when the optimality residual is also at
        most ``KKT_TOL``.
    max_iter : int
        Maximum number of outer passes over the coordinates.

    Returns
    -------
    LogisticModel
        ``degenerate=True`` when the (weighted) training targets hold a single
        class; such a model has zero weights and predicts the clipped class rate.
        ``objective_path`` holds J after every pass.
    """
    if C <= 0:
        raise ModelFitError(f"C must be positive, got {C}")
    X, y, s = _check_inputs(X, y, weights)
    n, d = X.shape

    rate = float(np.clip(np.dot(s, y) / s.sum(), PROBA_CLIP, 1.0 - PROBA_CLIP))
    b = float(logit(rate))
    w = np.zeros(d)

    active = s > 0
    if np.unique(y[active]).size < 2:
        log.warning(f"Single-class training target (rate={rate:.3g}); returning degenerate constant model")
        J0 = C * _weighted_loss(np.full(n, b), y, s)
        return LogisticModel(
            weights=w, intercept=b, C=C, converged=True, n_iters=0, degenerate=True,
            objective=J0, kkt=0.0, objective_path=(J0,),
        )

    Xf = np.asfortranarray(X)
    lipschitz = C / 4.0 * (s @ (Xf ** 2))
    lipschitz_b = C / 4.0 * s.sum()

    z = np.full(n, b)
    J = C * _weighted_loss(z, y, s)
    path = [J]
    kkt = float("inf")
    converged = False
    n_iters = 0

    for n_iters in range(1, max_iter + 1):
        J_prev = J
        for j in range(d):
            if lipschitz[j] == 0.0:
                continue
            xj = Xf[:, j]
            p = expit(z)
            g = C * np.dot(s * (p - y), xj)
            h = C * np.dot(s * p * (1.0 - p), xj * xj)
            cur = abs(w[j]) + C * _weighted_loss(z, y, s)
            step = 0.0
            if h > 0.0:
                cand = _soft_threshold(w[j] - g / h, 1.0 / h)
                if abs(cand) + C * _weighted_loss(z + (cand - w[j]) * xj, y, s) <= cur:
                    step = cand - w[j]
            if step == 0.0:
                cand = _soft_threshold(w[j] - g / lipschitz[j], 1.0 / lipschitz[j])
                step = cand - w[j]
            if step != 0.0:
                w[j] += step
                z += step * xj

        shift = _solve_intercept(z, y, s, C, lipschitz_b)
        b += shift
        z += shift

        J = float(np.abs(w).sum()) + C * _weighted_loss(z, y, s)
        path.append(J)
        if J > J_prev + _MONOTONE_SLACK * max(1.0, abs(J_prev)):
            log.error(f"Objective increased at pass {n_iters}: {J_prev:.12g} -> {J:.12g}")
            raise ModelFitError(f"Objective increased from {J_prev!r} to {J!r} at pass {n_iters}")
        if J_prev - J < tol * max(abs(J_prev), 1e-300):
            kkt = kkt_residual(w, b, X, y, s, C)
            if kkt <= KKT_TOL:
                converged = True
                break

    if not converged:
        kkt = kkt_residual(w, b, X, y, s, C)
        log.warning(f"fit_l1_logistic did not converge in {max_iter} passes (J={J:.6g}, kkt={kkt:.3g})")
    log.debug(
        f"L1 logistic fit: n={n}, d={d}, C={C}, passes={n_iters}, nnz={int(np.count_nonzero(w))}, "
        f"J={J:.6g}, kkt={kkt:.3g}"
    )
    w.flags.writeable = False
    return LogisticModel(
        weights=w, intercept=b, C=C, converged=converged, n_iters=n_iters,
        objective=J, kkt=kkt, objective_path=tuple(path),
    )


# ---------------------------------------------------------------------------
# --- Prediction ------------------------------------------------------------
# ---------------------------------------------------------------------------

def predict_proba(model: LogisticModel, X: np.ndarray) -> np.ndarray:
    """sigmoid(w . x + b), clipped to [1e-12, 1 - 1e-12]."""
    X = as_matrix(X)
    if X.shape[1] != model.n_features:
        raise ModelFitError(f"Model expects {model.n_features} features, got {X.shape[1]}")
    return np.clip(expit(X @ model.weights + model.intercept), PROBA_CLIP, 1.0 - PROBA_CLIP)


def predict_label(model: LogisticModel, X: np.ndarray, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    return (predict_proba(model, X) >= threshold).astype(np.int64)
