import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adaptmcmc.mathcore import (
    FactoredGaussian,
    NotPositiveDefinite,
    eigen_bounds,
    factorize,
    mvn_logpdf,
    mvn_sample,
)

from conftest import random_spd


def test_factorize_identity():
    np.testing.assert_array_equal(factorize(np.eye(2)), np.eye(2))


def test_factorize_diagonal():
    np.testing.assert_array_equal(factorize([[4.0, 0.0], [0.0, 9.0]]), np.diag([2.0, 3.0]))


def test_factorize_reproduces_input():
    a = np.array([[2.0, 1.0], [1.0, 2.0]])
    L = factorize(a)
    assert np.all(np.triu(L, 1) == 0.0)
    assert np.linalg.norm(L @ L.T - a) / np.linalg.norm(a) < 1e-10


@pytest.mark.parametrize("m", [[[1.0, 2.0], [2.0, 1.0]], [[0.0]], [[-1.0]], [[1.0, 1.0], [1.0, 1.0]]])
def test_factorize_rejects_non_positive(m):
    with pytest.raises(NotPositiveDefinite):
        factorize(m)


def test_factorize_rejects_asymmetric():
    with pytest.raises(ValueError):
        factorize([[1.0, 0.5], [0.0, 1.0]])


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(1, 12))
def test_factorize_round_trip(seed, d):
    a = random_spd(np.random.default_rng(seed), d)
    L = factorize(a)
    assert np.linalg.norm(L @ L.T - a) / np.linalg.norm(a) < 1e-10


def test_sample_degenerate_spread():
    eps = 1e-300
    g = FactoredGaussian([1.0, 2.0], eps * np.eye(2))
    x = mvn_sample(g, np.random.default_rng(0))
    np.testing.assert_allclose(x, [1.0, 2.0], atol=10 * eps, rtol=0)


def test_sample_golden():
    g = FactoredGaussian(np.zeros(2), np.eye(2))
    x = mvn_sample(g, np.random.default_rng(12345))
    np.testing.assert_array_equal(x, np.random.default_rng(12345).standard_normal(2))
    np.testing.assert_array_equal(x, [-1.4238250364546312, 1.2637284581291104])


def test_sample_consumes_dim_normals():
    g = FactoredGaussian.from_covariance([0.0, 0.0, 0.0], np.eye(3))
    r1, r2 = np.random.default_rng(7), np.random.default_rng(7)
    mvn_sample(g, r1)
    r2.standard_normal(3)
    assert r1.random() == r2.random()


def test_sample_moments(rng):
    g = FactoredGaussian(np.zeros(2), np.eye(2))
    X = np.array([mvn_sample(g, rng) for _ in range(100_000)])
    assert np.all(np.abs(X.mean(axis=0)) < 0.02)
    assert np.all(np.abs(np.cov(X.T) - np.eye(2)) < 0.03)


def test_sample_applies_factor(rng):
    cov = np.array([[2.0, 0.8], [0.8, 1.0]])
    g = FactoredGaussian.from_covariance([1.0, -1.0], cov)
    X = np.array([mvn_sample(g, rng) for _ in range(100_000)])
    np.testing.assert_allclose(X.mean(axis=0), [1.0, -1.0], atol=0.03)
    np.testing.assert_allclose(np.cov(X.T), cov, atol=0.05)


def test_logpdf_standard_at_zero():
    g = FactoredGaussian([0.0], [[1.0]])
    assert mvn_logpdf(g, [0.0]) == pytest.approx(-0.5 * np.log(2 * np.pi), abs=1e-14)
    assert mvn_logpdf(g, [0.0]) == pytest.approx(-0.9189385, abs=1e-7)


def test_logpdf_scaled():
    g = FactoredGaussian.from_covariance([0.0], [[4.0]])
    expected = -0.5 * np.log(8 * np.pi) - 0.5
    assert mvn_logpdf(g, [2.0]) == pytest.approx(expected, abs=1e-14)
    assert mvn_logpdf(g, [2.0]) == pytest.approx(-2.1121, abs=1e-4)


def test_logpdf_symmetry(rng):
    g = FactoredGaussian.from_covariance(np.zeros(3), random_spd(rng, 3))
    for _ in range(20):
        x = rng.standard_normal(3)
        assert mvn_logpdf(g, x) == pytest.approx(mvn_logpdf(g, -x), abs=1e-12)


def test_logpdf_matches_scipy(rng):
    from scipy.stats import multivariate_normal
    cov = random_spd(rng, 4)
    mean = rng.standard_normal(4)
    g = FactoredGaussian.from_covariance(mean, cov)
    for _ in range(10):
        x = rng.standard_normal(4)
        assert mvn_logpdf(g, x) == pytest.approx(multivariate_normal(mean, cov).logpdf(x), rel=1e-10)


def test_logpdf_integrates_to_one():
    sigma = 1.7
    g = FactoredGaussian.from_covariance([0.3], [[sigma**2]])
    xs = np.linspace(0.3 - 10 * sigma, 0.3 + 10 * sigma, 20001)
    dens = np.exp([mvn_logpdf(g, [x]) for x in xs])
    assert abs(np.trapezoid(dens, xs) - 1.0) < 1e-6


def test_logpdf_dimension_mismatch():
    with pytest.raises(ValueError):
        mvn_logpdf(FactoredGaussian([0.0], [[1.0]]), [0.0, 1.0])


def test_factored_gaussian_validates():
    with pytest.raises(ValueError):
        FactoredGaussian([0.0, 0.0], [[1.0, 1.0], [0.0, 1.0]])
    with pytest.raises(ValueError):
        FactoredGaussian([0.0], [[0.0]])


@pytest.mark.parametrize("m, expected", [
    (np.diag([1.0, 5.0]), (1.0, 5.0)),
    ([[2.0, 1.0], [1.0, 2.0]], (1.0, 3.0)),
    (np.eye(3), (1.0, 1.0)),
])
def test_eigen_bounds(m, expected):
    lo, hi = eigen_bounds(m)
    assert lo == pytest.approx(expected[0], rel=1e-8)
    assert hi == pytest.approx(expected[1], rel=1e-8)
