# tests/test_density.py
import numpy as np
import pytest
from scipy.stats import iqr, kstest

from app.services.core.errors import DensityError
from app.services.models.density import GaussianKde, fit_kde, silverman_bandwidth


@pytest.fixture
def probas():
    rng = np.random.default_rng(4)
    return np.clip(rng.beta(5, 2, size=40), 0.0, 1.0)


def test_silverman_bandwidth_formula(probas):
    spread = min(np.std(probas, ddof=1), iqr(probas) / 1.34)
    assert silverman_bandwidth(probas) == pytest.approx(0.9 * spread * len(probas) ** -0.2)


@pytest.mark.parametrize("points", [[0.3], [0.7, 0.7, 0.7]])
def test_degenerate_points_use_minimum_bandwidth(points):
    kde = fit_kde(np.array(points))
    assert kde.bandwidth == 0.01


@pytest.mark.parametrize("points", [[0.2, 0.25, 0.9, 0.91, 0.95], [0.5], [0.99, 0.999, 0.97, 0.985]])
def test_pdf_integrates_to_one(points):
    kde = fit_kde(np.array(points))
    lo, hi = kde.support
    grid = np.linspace(lo, hi, 200_001)
    assert np.trapezoid(kde.pdf(grid), grid) == pytest.approx(1.0, abs=1e-6)


def test_cdf_matches_integrated_pdf(probas):
    kde = fit_kde(probas)
    lo, _ = kde.support
    grid = np.linspace(lo, 0.6, 100_001)
    assert kde.cdf(0.6) == pytest.approx(np.trapezoid(kde.pdf(grid), grid), abs=1e-6)
    assert kde.cdf(lo) == pytest.approx(0.0, abs=1e-8)


def test_scalar_and_vector_evaluation_agree(probas):
    kde = fit_kde(probas)
    xs = np.array([0.1, 0.5, 0.9])
    assert isinstance(kde.pdf(0.5), float)
    np.testing.assert_allclose(kde.pdf(xs), [kde.pdf(x) for x in xs])


def test_thresholded_sample_frequency_matches_kde_mass(probas):
    kde = fit_kde(probas)
    draws = np.clip(kde.sample(10_000, seed=9), 0.0, 1.0)
    assert (draws >= 0.5).mean() == pytest.approx(1.0 - kde.cdf(0.5), abs=0.02)


def test_sampling_is_deterministic(probas):
    kde = fit_kde(probas)
    np.testing.assert_array_equal(kde.sample(50, seed=1), kde.sample(50, seed=1))
    assert not np.array_equal(kde.sample(50, seed=1), kde.sample(50, seed=2))


@pytest.mark.parametrize("points", [[], [0.1, np.nan]])
def test_fit_kde_rejects_bad_points(points):
    with pytest.raises(DensityError):
        fit_kde(np.array(points, dtype=float))


def test_invalid_bandwidth_and_sample_size(probas):
    with pytest.raises(DensityError):
        GaussianKde(points=probas, bandwidth=0.0)
    with pytest.raises(DensityError, match=">= 1"):
        fit_kde(probas).sample(0, seed=0)


def test_single_point_unit_bandwidth_peak():
    kde = GaussianKde(points=np.array([0.0]), bandwidth=1.0)
    assert kde.pdf(0.0) == pytest.approx(1.0 / np.sqrt(2.0 * np.pi), abs=1e-12)


def test_large_sample_matches_kde_cdf(probas):
    kde = fit_kde(probas)
    result = kstest(kde.sample(100_000, seed=3), kde.cdf)
    assert result.statistic < 0.01


@pytest.mark.parametrize("a", [0.05, 0.3, 1.7])
def test_pdf_symmetric_for_mirrored_points(a):
    kde = fit_kde(np.array([-a, a]))
    xs = np.linspace(0.0, 3.0 * a, 25)
    np.testing.assert_allclose(kde.pdf(-xs), kde.pdf(xs), rtol=1e-12)


@pytest.mark.parametrize("points", [[0.42], [0.61, 0.61]])
def test_pdf_symmetric_about_a_lone_point(points):
    kde = fit_kde(np.array(points))
    d = np.linspace(0.0, 5.0 * kde.bandwidth, 11)
    np.testing.assert_allclose(kde.pdf(points[0] - d), kde.pdf(points[0] + d), rtol=1e-12)


@pytest.mark.parametrize("points", [[0.3], [0.2, 0.25, 0.9, 0.91, 0.95]])
def test_pdf_vanishes_far_from_every_point(points):
    kde = fit_kde(np.array(points))
    lo, hi = min(points), max(points)
    far = np.array([lo - 10.5 * kde.bandwidth, hi + 10.5 * kde.bandwidth])
    assert (kde.pdf(far) < 1e-20).all()
    assert kde.cdf(far[0]) < 1e-20
    assert kde.cdf(far[1]) == pytest.approx(1.0, abs=1e-15)


def test_sample_mean_near_tight_cluster():
    kde = fit_kde(np.array([0.9, 0.91, 0.92]))
    means = [kde.sample(100, seed=s).mean() for s in range(100)]
    assert all(abs(m - 0.91) < 0.05 for m in means)
