import numpy as np
import pytest

from adaptmcmc import target as tgt
from adaptmcmc.controller import RunTrace, StepsizeSchedule
from adaptmcmc.diagnostics import (
    InsufficientLength,
    batch_means,
    batch_means_variance,
    clt_test,
    drift_bound,
    drift_probe,
    ergodic_average,
    evaluate_function,
    kernel_lipschitz_probe,
    minorization_probe,
    parse_function,
    replicate_seeds,
    safeguard_infimum,
    stationary_distribution,
    target_expectation,
    two_state_matrix,
    two_state_oracle,
)
from adaptmcmc.kernels import MixtureProposal, Safeguard, SrwmKernel
from adaptmcmc.mixture_em import MixtureXi


def make_trace(X) -> RunTrace:
    X = np.asarray(X, dtype=float).reshape(len(X), -1)
    n = len(X)
    return RunTrace(X, np.ones(n, bool), np.zeros(n), np.zeros(n, np.int64),
                    np.arange(1, n + 1), np.zeros(n), np.array([n]), np.zeros((1, 1)), np.zeros(1))


class IidSampler:
    """Stand-in algorithm emitting exact target draws."""

    def __init__(self, target):
        self.target = target

    def compiled_run(self, schedule, steps, rng, cadence):
        return make_trace(tgt.exact_samples(self.target, steps, rng))


def norm_pdf(x, var):
    return np.exp(-0.5 * x * x / var) / np.sqrt(2 * np.pi * var)


# -- test functions ---------------------------------------------------------

@pytest.mark.parametrize("fid,expected", [
    ("1", 1.0), ("x1", 1.0), ("x1^2", 3.0), ("x1*x2", 0.8 - 1.0), ("x2^2", 2.0)])
def test_target_expectations(gauss2d, fid, expected):
    assert target_expectation(gauss2d, fid) == pytest.approx(expected, abs=1e-12)


def test_tanh_expectation_quadrature(gauss2d):
    g = np.linspace(1 - 12 * np.sqrt(2), 1 + 12 * np.sqrt(2), 200001)
    ref = np.trapezoid(np.tanh(g) * norm_pdf(g - 1, 2.0), g)
    assert target_expectation(gauss2d, "tanh(x1)") == pytest.approx(ref, abs=1e-10)


def test_mixture_tanh_expectation_is_zero(pm2_mixture):
    assert target_expectation(pm2_mixture, "tanh(x1)") == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("bad", ["x0", "y1", "x1^3", "sin(x1)", ""])
def test_parse_function_rejects(bad):
    with pytest.raises(ValueError):
        parse_function(bad)


def test_evaluate_function():
    X = np.array([[1.0, 2.0], [3.0, -1.0]])
    assert evaluate_function("x1*x2", X).tolist() == [2.0, -3.0]
    assert evaluate_function("x2^2", X).tolist() == [4.0, 1.0]
    assert evaluate_function("1", X).tolist() == [1.0, 1.0]


# -- ergodic averages ---------------------------------------------------------

def test_ergodic_constant(rng):
    rep = ergodic_average(make_trace(rng.standard_normal(1000)), "1")
    assert rep.final == 1.0 and np.all(rep.running == 1.0)


def test_ergodic_iid(std1d):
    X = tgt.exact_samples(std1d, 100_000, np.random.default_rng(123))
    tr = make_trace(X)
    rep = ergodic_average(tr, "x1", target=std1d)
    assert abs(rep.final) < 0.01 and rep.passed
    assert rep.final == pytest.approx(X.mean(), abs=1e-15)
    rep2 = ergodic_average(tr, "x1^2", target=std1d)
    assert abs(rep2.final - 1) < 0.014 and rep2.passed


def test_ergodic_linear_and_burn_in(rng):
    X = rng.standard_normal((500, 1))
    tr = make_trace(X)
    a = ergodic_average(tr, "x1", burn_in=100)
    b = ergodic_average(tr, "x1^2", burn_in=100)
    ref = (X[100:, 0] + X[100:, 0] ** 2).mean()
    assert a.final + b.final == pytest.approx(ref, abs=1e-14)
    assert a.n == 400


def test_ergodic_empty_raises(rng):
    with pytest.raises(InsufficientLength):
        ergodic_average(make_trace(rng.standard_normal(10)), "x1", burn_in=10)


# -- batch means --------------------------------------------------------------

def test_batch_means_iid():
    v = np.random.default_rng(31).standard_normal(30_000)
    assert 0.6 <= batch_means(v, 30) <= 1.5


def test_batch_means_constant():
    assert batch_means(np.full(900, 3.7), 30) == 0.0


def test_batch_means_alternating():
    v = np.tile([1.0, -1.0], 300)
    assert batch_means(v, 30) == 0.0


def test_batch_means_scaling_ar1():
    # AR(1) with phi = 0.5 and unit innovations: asymptotic variance 1 / (1 - phi)^2 = 4
    rng = np.random.default_rng(8)
    e = rng.standard_normal(300_000)
    v = np.empty_like(e)
    v[0] = e[0]
    for i in range(1, len(e)):
        v[i] = 0.5 * v[i - 1] + e[i]
    assert batch_means(v, 30) == pytest.approx(4.0, rel=0.3)


def test_batch_means_too_short():
    with pytest.raises(InsufficientLength):
        batch_means(np.zeros(59), 30)


def test_batch_means_variance_uses_trace(rng):
    X = rng.standard_normal((3000, 1))
    assert batch_means_variance(make_trace(X), "x1", 30, 600) == batch_means(X[600:, 0], 30)


# -- CLT ----------------------------------------------------------------------

def test_clt_iid(std1d):
    rep = clt_test(IidSampler(std1d), StepsizeSchedule(), "x1", replicates=200, n=10_000, seed=2)
    assert rep.p_value > 0.01
    assert rep.z.shape == (200,)


def test_clt_batch_means_sigma(std1d):
    rep = clt_test(IidSampler(std1d), StepsizeSchedule(), "x1", 100, 3000, sigma="batch_means", seed=4)
    assert 0.7 < rep.sigma_hat < 1.3


def test_clt_refuses_few_replicates(std1d):
    with pytest.raises(ValueError):
        clt_test(IidSampler(std1d), StepsizeSchedule(), "x1", replicates=50)


def test_clt_calibration(std1d):
    low = 0
    for meta in range(20):
        rep = clt_test(IidSampler(std1d), StepsizeSchedule(), "x1", 200, 2000, seed=1000 + meta)
        low += rep.p_value < 0.05
    assert low / 20 <= 0.2


def test_replicate_seeds_stable():
    a = [np.random.default_rng(s).random() for s in replicate_seeds(5, 3)]
    b = [np.random.default_rng(s).random() for s in replicate_seeds(5, 3)]
    assert a == b and len(set(a)) == 3


def test_clt_workers_do_not_change_results(gauss2d):
    from adaptmcmc.algorithms import NsrwmAlgorithm
    alg = NsrwmAlgorithm(gauss2d)
    a = clt_test(alg, StepsizeSchedule(), "x1", 100, 500, seed=3, workers=1)
    b = clt_test(alg, StepsizeSchedule(), "x1", 100, 500, seed=3, workers=4)
    np.testing.assert_array_equal(a.z, b.z)


# -- drift --------------------------------------------------------------------

def test_drift_bound():
    assert drift_bound(0.5) == pytest.approx(1.25, abs=1e-15)
    u = np.linspace(0, 1, 100001)
    assert drift_bound(0.3) == pytest.approx((1 - u + u**0.7).max(), abs=1e-9)


def test_drift_all_rejected_ratio_one(std1d):
    k = SrwmKernel.from_covariance(std1d, [[1e12]])
    rows = drift_probe(k, 0.5, [[0.0]], 200, np.random.default_rng(0))
    assert rows[0].ratio == 1.0 and rows[0].std_error == 0.0


def test_drift_tail_contraction(std1d):
    k = SrwmKernel.from_covariance(std1d, [[2.38**2]])
    # quadrature value of P V(8) / V(8)
    z = np.linspace(-12 * 2.38, 12 * 2.38, 200001)
    y = 8 + z
    a = np.minimum(1, np.exp(-0.5 * (y * y - 64)))
    ratio = np.exp(0.25 * (y * y - 64))
    ref = np.trapezoid(norm_pdf(z, 2.38**2) * (a * ratio + 1 - a), z)
    rows = drift_probe(k, 0.5, [[8.0], [-8.0]], 10_000, np.random.default_rng(1))
    for r in rows:
        assert r.ratio < 0.95
        assert abs(r.ratio - ref) < 3 * r.std_error


def test_drift_global_bound(std1d):
    k = SrwmKernel.from_covariance(std1d, [[2.38**2]])
    pts = [[v] for v in np.linspace(-12, 12, 25)]
    for r in drift_probe(k, 0.5, pts, 2000, np.random.default_rng(2)):
        assert r.ratio <= drift_bound(0.5) + 3 * r.std_error


def test_drift_se_shrinks(std1d):
    k = SrwmKernel.from_covariance(std1d, [[2.38**2]])
    small = drift_probe(k, 0.5, [[3.0]], 1000, np.random.default_rng(3))[0]
    big = drift_probe(k, 0.5, [[3.0]], 10_000, np.random.default_rng(4))[0]
    assert big.std_error < small.std_error


# -- minorization ---------------------------------------------------------------

def test_minorization_exact_proposal(gauss2d, rng):
    rep = minorization_probe(lambda X: tgt.log_density_batch(gauss2d, X), gauss2d, 5000, rng)
    assert rep.eps_hat == pytest.approx(1.0, abs=1e-12)


def test_minorization_wider_gaussian(std1d, rng):
    rep = minorization_probe(lambda X: np.log(norm_pdf(X[:, 0], 4.0)), std1d, 5000, rng)
    assert rep.eps_hat == pytest.approx(0.5, abs=1e-12)
    assert rep.argmin.tolist() == [0.0]


def test_minorization_safeguarded_mixture(std1d, rng):
    xi = MixtureXi.from_params([0.5, 0.5], [-3.0, 3.0], [0.2, 0.2])
    sg = Safeguard.gaussian([0.0], [[4.0]])
    p = MixtureProposal(xi, sg, 0.1)
    from adaptmcmc.kernels import mixture_proposal_logpdf
    log_q = lambda X: np.array([mixture_proposal_logpdf(p, x) for x in X])
    e = safeguard_infimum(sg.logpdf, std1d)
    assert e == pytest.approx(0.5, abs=1e-8)
    rep = minorization_probe(log_q, std1d, 5000, rng, lower_bound=0.1 * e)
    assert rep.eps_hat >= 0.05 and rep.passed


# -- kernel regularity -----------------------------------------------------------

def test_lipschitz_equal_parameters(std1d, rng):
    rep = kernel_lipschitz_probe(std1d, [(1.0, 1.0)], np.tanh, [[0.5]], 1000, 0.5, rng)
    assert rep.rows[0]["diff"] == 0.0


def test_lipschitz_constant_function(std1d, rng):
    rep = kernel_lipschitz_probe(std1d, [(1.0, 1.1)], lambda X: np.ones(len(X)), [[0.5]], 1000, 0.5, rng)
    assert rep.rows[0]["diff"] == 0.0


def test_lipschitz_bound(std1d, rng):
    rep = kernel_lipschitz_probe(std1d, [(1.0, 1.1)], lambda X: np.tanh(X[:, 0]),
                                 [[0.0], [0.7], [2.0]], 100_000, 0.5, rng)
    assert rep.bound == 4.0
    assert rep.passed


# -- two-state counterexample -------------------------------------------------------

def test_two_state_examples():
    rep = two_state_oracle(0.5, 0.5)
    np.testing.assert_allclose(rep.adaptive_invariant, [0.5, 0.5], atol=1e-12)
    rep = two_state_oracle(0.3, 0.6)
    np.testing.assert_allclose(rep.adaptive_invariant, [2 / 3, 1 / 3], atol=1e-12)
    np.testing.assert_allclose(rep.closed_form, [2 / 3, 1 / 3], atol=1e-15)
    np.testing.assert_allclose(rep.fixed_invariants, 0.5, atol=1e-12)


def test_two_state_simulation():
    rep = two_state_oracle(0.3, 0.6, simulate_steps=10**6, rng=np.random.default_rng(0))
    np.testing.assert_allclose(rep.simulated, [2 / 3, 1 / 3], atol=0.005)


def test_two_state_rejects_bad_parameters():
    with pytest.raises(ValueError):
        two_state_oracle(0.0, 0.5)


def test_stationary_distribution():
    P = two_state_matrix(0.2, 0.7)
    pi = stationary_distribution(P)
    np.testing.assert_allclose(pi @ P, pi, atol=1e-14)
