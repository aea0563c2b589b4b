import numpy as np
import pytest
from scipy import stats

from adaptmcmc import target as tgt
from adaptmcmc.mathcore import FactoredGaussian, mvn_sample

from conftest import phi


def test_log_density_difference(std1d):
    assert tgt.log_density(std1d, [0.0]) - tgt.log_density(std1d, [1.0]) == pytest.approx(0.5, abs=1e-14)


def test_mixture_symmetry(pm2_mixture):
    assert tgt.log_density(pm2_mixture, [0.5]) == pytest.approx(tgt.log_density(pm2_mixture, [-0.5]), abs=1e-14)


def test_mixture_two_term_value(pm2_mixture):
    expected = np.log(0.5 * phi(4.0) + 0.5 * phi(0.0))
    assert tgt.log_density(pm2_mixture, [2.0]) == pytest.approx(expected, abs=1e-13)


def test_log_density_finite_far_out(pm2_mixture, gauss2d):
    assert np.isfinite(tgt.log_density(pm2_mixture, [1e4]))
    assert np.isfinite(tgt.log_density(gauss2d, [1e4, -1e4]))


def test_moments_gaussian(gauss2d):
    mu, cov = tgt.exact_moments(gauss2d)
    np.testing.assert_array_equal(mu, [1.0, -1.0])
    np.testing.assert_allclose(cov, [[2.0, 0.8], [0.8, 1.0]], atol=1e-15)


def test_moments_mixture(pm2_mixture):
    mu, cov = tgt.exact_moments(pm2_mixture)
    assert mu == pytest.approx([0.0], abs=1e-15)
    assert cov[0, 0] == pytest.approx(5.0, abs=1e-14)


def test_moments_single_component():
    t = tgt.gaussian_mixture([1.0], [[0.5, 1.5]], [[[1.0, 0.3], [0.3, 2.0]]])
    mu, cov = tgt.exact_moments(t)
    np.testing.assert_allclose(mu, [0.5, 1.5], atol=1e-15)
    np.testing.assert_allclose(cov, [[1.0, 0.3], [0.3, 2.0]], atol=1e-14)


def test_invalid_weights():
    with pytest.raises(ValueError):
        tgt.gaussian_mixture([0.6, 0.6], [-1.0, 1.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        tgt.gaussian_mixture([1.0, 0.0], [-1.0, 1.0], [1.0, 1.0])


def test_invalid_covariance():
    with pytest.raises(ValueError):
        tgt.gaussian([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])


def test_exact_sample_mean(pm2_mixture, rng):
    X = tgt.exact_samples(pm2_mixture, 100_000, rng)
    assert abs(X.mean()) < 0.07


def test_exact_sample_batch_matches_single(pm2_mixture):
    r1, r2 = np.random.default_rng(3), np.random.default_rng(3)
    batch = tgt.exact_samples(pm2_mixture, 50, r1)
    single = np.array([tgt.exact_sample(pm2_mixture, r2) for _ in range(50)])
    np.testing.assert_array_equal(batch, single)


def test_exact_sample_golden(pm2_mixture):
    x = tgt.exact_sample(pm2_mixture, np.random.default_rng(99))
    np.testing.assert_array_equal(x, [GOLDEN_MIXTURE_DRAW])


GOLDEN_MIXTURE_DRAW = 1.5355815850457812


def test_single_component_matches_mvn(rng):
    t = tgt.gaussian_mixture([1.0], [[0.7]], [[[2.5]]])
    a = tgt.exact_samples(t, 10_000, rng)[:, 0]
    g = FactoredGaussian.from_covariance([0.7], [[2.5]])
    b = np.array([mvn_sample(g, rng)[0] for _ in range(10_000)])
    assert stats.ks_2samp(a, b).pvalue > 0.01


@pytest.mark.parametrize("fixture", ["gauss2d", "pm2_mixture", "em_target"])
def test_moments_against_monte_carlo(fixture, request, rng):
    t = request.getfixturevalue(fixture)
    mu, cov = tgt.exact_moments(t)
    X = tgt.exact_samples(t, 100_000, rng)
    assert np.linalg.norm(X.mean(axis=0) - mu) < 3 * np.sqrt(np.trace(cov) / 100_000)
    np.testing.assert_allclose(np.cov(X.T).reshape(cov.shape), cov, rtol=0.05, atol=0.02)


@pytest.mark.parametrize("fixture", ["gauss2d", "pm2_mixture", "em_target"])
def test_gradient_against_finite_differences(fixture, request, rng):
    t = request.getfixturevalue(fixture)
    h = 1e-5
    worst = 0.0
    for _ in range(100):
        x = 3.0 * rng.standard_normal(t.dim)
        g = tgt.grad_log_density(t, x)
        for i in range(t.dim):
            e = np.zeros(t.dim)
            e[i] = h
            fd = (tgt.log_density(t, x + e) - tgt.log_density(t, x - e)) / (2 * h)
            worst = max(worst, abs(fd - g[i]))
    assert worst < 1e-6


def test_superexp_probe_gaussian(std1d):
    table = tgt.superexp_probe(std1d, [[1.0]], [5.0, 10.0])
    assert table[0, 0] == pytest.approx(-5.0, abs=1e-12)
    assert table[0, 1] == pytest.approx(-10.0, abs=1e-12)
    assert table[0, 1] < table[0, 0]


def test_superexp_probe_mixture(pm2_mixture):
    table = tgt.superexp_probe(pm2_mixture, [[1.0], [-1.0]], [10.0])
    assert table[0, 0] == pytest.approx(-8.0, abs=0.01)
    assert table[1, 0] == pytest.approx(-8.0, abs=0.01)


def test_superexp_probe_decreases_along_rays(gauss2d, rng):
    dirs = rng.standard_normal((5, 2))
    table = tgt.superexp_probe(gauss2d, dirs, [5.0, 10.0, 20.0, 40.0])
    assert np.all(np.diff(table, axis=1) < 0)


def test_log_sup_density(pm2_mixture, std1d):
    assert tgt.log_sup_density(std1d) == pytest.approx(-0.5 * np.log(2 * np.pi), abs=1e-14)
    grid = np.linspace(-5, 5, 200001)
    assert tgt.log_sup_density(pm2_mixture) == pytest.approx(tgt.log_density_batch(pm2_mixture, grid).max(), abs=1e-9)


def test_dict_round_trip(em_target, gauss2d):
    for t in (em_target, gauss2d):
        back = tgt.from_dict(t.to_dict())
        assert back.kind == t.kind
        np.testing.assert_array_equal(back.means, t.means)
        np.testing.assert_array_equal(back.covs, t.covs)
