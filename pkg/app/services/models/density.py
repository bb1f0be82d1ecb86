# app/services/models/density.py
"""One-dimensional Gaussian kernel density estimation.

Bandwidth follows Silverman's rule with the robust spread
``min(sd, IQR / 1.34)``; when that spread is zero (a single point, or all
points equal) the bandwidth falls back to ``KDE_MIN_BANDWIDTH``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import iqr, norm

from ..core.config import log
from ..core.constants import KDE_MIN_BANDWIDTH
from ..core.errors import DensityError


@dataclass(frozen=True, eq=False)
class GaussianKde:
    points: np.ndarray
    bandwidth: float

    def __post_init__(self) -> None:
        if not self.bandwidth > 0:
            raise DensityError(f"Bandwidth must be positive, got {self.bandwidth}")

    @property
    def n_points(self) -> int:
        return int(self.points.shape[0])

    @property
    def support(self) -> tuple[float, float]:
        """Interval holding essentially all of the mass: [min - 6h, max + 6h]."""
        return float(self.points.min() - 6 * self.bandwidth), float(self.points.max() + 6 * self.bandwidth)

    def pdf(self, x: float | np.ndarray) -> float | np.ndarray:
        return pdf(self, x)

    def cdf(self, x: float | np.ndarray) -> float | np.ndarray:
        return cdf(self, x)

    def sample(self, k: int, seed: int) -> np.ndarray:
        return sample(self, k, seed)


def silverman_bandwidth(points: np.ndarray) -> float:
    """0.9 * min(sd, IQR/1.34) * n^(-1/5), floored for degenerate inputs."""
    n = points.shape[0]
    if n < 2:
        return KDE_MIN_BANDWIDTH
    spread = min(float(np.std(points, ddof=1)), float(iqr(points)) / 1.34)
    if spread <= 0:
        return KDE_MIN_BANDWIDTH
    return 0.9 * spread * n ** (-0.2)


def fit_kde(points: np.ndarray) -> GaussianKde:
    pts = np.asarray(points, dtype=np.float64).ravel()
    if pts.size == 0:
        raise DensityError("Cannot fit a KDE on zero points")
    if not np.isfinite(pts).all():
        log.error("Non-finite value passed to fit_kde")
        raise DensityError("KDE points must be finite")
    pts = pts.copy()
    pts.flags.writeable = False
    return GaussianKde(points=pts, bandwidth=silverman_bandwidth(pts))


def _evaluate(kde: GaussianKde, x: float | np.ndarray, kernel) -> float | np.ndarray:
    xs = np.asarray(x, dtype=np.float64)
    u = (xs[..., None] - kde.points) / kde.bandwidth
    out = kernel(u).mean(axis=-1)
    return float(out) if out.ndim == 0 else out


def pdf(kde: GaussianKde, x: float | np.ndarray) -> float | np.ndarray:
    """(1 / (n h)) * sum_i phi((x - x_i) / h); accepts scalars or arrays."""
    out = _evaluate(kde, x, norm.pdf)
    return out / kde.bandwidth


def cdf(kde: GaussianKde, x: float | np.ndarray) -> float | np.ndarray:
    """(1 / n) * sum_i Phi((x - x_i) / h)."""
    return _evaluate(kde, x, norm.cdf)


def sample(kde: GaussianKde, k: int, seed: int) -> np.ndarray:
    """Draw ``k`` values: a uniformly chosen point plus N(0, h^2) noise."""
    if k < 1:
        raise DensityError(f"Sample size must be >= 1, got {k}")
    rng = np.random.default_rng(seed)
    centers = kde.points[rng.integers(0, kde.n_points, size=k)]
    return centers + rng.normal(0.0, kde.bandwidth, size=k)
