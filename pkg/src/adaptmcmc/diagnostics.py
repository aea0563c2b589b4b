"""Empirical checks of the limit theorems and of the kernel assumptions.

Nothing here feeds back into sampling. Monte Carlo quantities are always
reported with standard errors, and comparisons use 3-SE slack.
"""
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import integrate, optimize, stats

from .controller import RunTrace, StepsizeSchedule, run
from .kernels import ImhKernel, SrwmKernel, imh_step, srwm_step
from .target import (
    TargetModel,
    exact_moments,
    exact_samples,
    log_density,
    log_density_batch,
    log_sup_density,
)


class InsufficientLength(ValueError):
    pass


# ---------------------------------------------------------------------------
# test functions
# ---------------------------------------------------------------------------

_FUNC = re.compile(r"^(?:(1)|x([1-9]\d*)|x([1-9]\d*)\^2|x([1-9]\d*)\*x([1-9]\d*)|tanh\(x([1-9]\d*)\))$")


def parse_function(fid: str):
    """Parses a test-function id into ``(kind, indices)``.

    Supported ids (1-based coordinates): ``1``, ``x1``, ``x1^2``,
    ``x1*x2``, ``tanh(x1)``.
    """
    m = _FUNC.match(fid.replace(" ", ""))
    if m is None:
        raise ValueError(f"unknown test function {fid!r}")
    one, lin, sq, p1, p2, th = m.groups()
    if one:
        return "const", ()
    if lin:
        return "linear", (int(lin) - 1,)
    if sq:
        return "product", (int(sq) - 1, int(sq) - 1)
    if p1:
        return "product", (int(p1) - 1, int(p2) - 1)
    return "tanh", (int(th) - 1,)


def evaluate_function(fid: str, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    kind, idx = parse_function(fid)
    if any(i >= X.shape[1] for i in idx):
        raise ValueError(f"{fid!r} refers to a coordinate beyond dimension {X.shape[1]}")
    if kind == "const":
        return np.ones(X.shape[0])
    if kind == "linear":
        return X[:, idx[0]].copy()
    if kind == "product":
        return X[:, idx[0]] * X[:, idx[1]]
    return np.tanh(X[:, idx[0]])


def target_expectation(t: TargetModel, fid: str) -> float:
    """``pi(f)`` in closed form, or by adaptive quadrature for ``tanh``."""
    kind, idx = parse_function(fid)
    if kind == "const":
        return 1.0
    mu, cov = exact_moments(t)
    if kind == "linear":
        return float(mu[idx[0]])
    if kind == "product":
        i, j = idx
        return float(cov[i, j] + mu[i] * mu[j])
    i = idx[0]
    total = 0.0
    for w, m, c in zip(t.weights, t.means, t.covs):
        sd = np.sqrt(c[i, i])
        val, _ = integrate.quad(lambda z: np.tanh(m[i] + sd * z) * np.exp(-0.5 * z * z),
                                -np.inf, np.inf, epsabs=1e-14, epsrel=1e-13, limit=200)
        total += w * val / np.sqrt(2.0 * np.pi)
    return total


# ---------------------------------------------------------------------------
# averages and variances
# ---------------------------------------------------------------------------

def batch_means(values, batches: int = 30) -> float:
    """Batch-means estimate of the asymptotic variance of ``values``.

    The series is cut into ``batches`` consecutive blocks of equal size ``b``
    (the oldest ``n mod batches`` values are dropped); the estimate is
    ``b`` times the sample variance of the block means.

    Raises:
        InsufficientLength: if fewer than ``2 * batches`` values are given.
    """
    v = np.asarray(values, dtype=float)
    n = v.size
    if batches < 2 or n < 2 * batches:
        raise InsufficientLength(f"need at least {2 * batches} values, got {n}")
    b = n // batches
    v = v[n - b * batches:]
    # shifting by a sample value leaves the estimate unchanged and makes it
    # exactly zero on constant input
    blocks = (v - v[0]).reshape(batches, b).mean(axis=1)
    return float(b * blocks.var(ddof=1))


def batch_means_variance(trace: RunTrace, f: str, batches: int = 30, burn_in: int = 0) -> float:
    return batch_means(evaluate_function(f, trace.x[burn_in:]), batches)


@dataclass
class ErgodicReport:
    function: str
    n: int
    checkpoints: np.ndarray
    running: np.ndarray
    final: float
    pi_f: float | None = None
    error: float | None = None
    sigma_bm: float | None = None
    tolerance: float | None = None

    @property
    def passed(self) -> bool | None:
        if self.error is None or self.tolerance is None:
            return None
        return bool(abs(self.error) < self.tolerance)

    def to_dict(self) -> dict:
        return {"function": self.function, "n": self.n, "final": self.final,
                "pi_f": self.pi_f, "error": self.error, "sigma_bm": self.sigma_bm,
                "tolerance": self.tolerance, "passed": self.passed,
                "checkpoints": self.checkpoints.tolist(), "running": self.running.tolist()}


def ergodic_average(trace: RunTrace, f: str, burn_in: int = 0,
                    target: TargetModel | None = None, n_checkpoints: int = 10,
                    batches: int = 30, slack: float = 5.0) -> ErgodicReport:
    """Running averages ``S_n(f)`` over steps after ``burn_in``.

    With a ``target``, the report also carries ``pi(f)``, the final error and
    the tolerance ``slack * sigma_bm / sqrt(n)``.
    """
    vals = evaluate_function(f, trace.x[burn_in:])
    n = vals.size
    if n == 0:
        raise InsufficientLength("trace is empty after burn-in")
    cps = np.unique(np.geomspace(1, n, n_checkpoints).astype(int))
    running = np.cumsum(vals)[cps - 1] / cps
    final = float(vals.mean())
    rep = ErgodicReport(f, n, cps, running, final)
    if target is not None:
        rep.pi_f = target_expectation(target, f)
        rep.error = final - rep.pi_f
        if n >= 2 * batches:
            rep.sigma_bm = float(np.sqrt(batch_means(vals, batches)))
            rep.tolerance = slack * rep.sigma_bm / np.sqrt(n)
    return rep


# ---------------------------------------------------------------------------
# CLT
# ---------------------------------------------------------------------------

@dataclass
class CltReport:
    replicates: int
    n: int
    burn_in: int
    function: str
    sigma_method: str
    sigma_hat: float
    z: np.ndarray = field(repr=False)
    ks_statistic: float
    p_value: float
    final_kappas: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {"replicates": self.replicates, "n": self.n, "burn_in": self.burn_in,
                "function": self.function, "sigma_method": self.sigma_method,
                "sigma_hat": self.sigma_hat, "ks_statistic": self.ks_statistic,
                "p_value": self.p_value, "z": self.z.tolist(),
                "final_kappas": self.final_kappas.tolist()}


def replicate_seeds(seed: int, replicates: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(replicates)


def run_replicates(alg, schedule: StepsizeSchedule, steps: int, replicates: int, seed: int = 0,
                   cadence: int | None = None, workers: int = 1) -> list[RunTrace]:
    """Independent runs; replicate ``r`` uses child ``r`` of ``SeedSequence(seed)``."""
    seeds = replicate_seeds(seed, replicates)
    cadence = cadence or steps

    def one(ss):
        return run(alg, schedule, steps, seed=np.random.default_rng(ss), cadence=cadence)

    if workers <= 1:
        return [one(s) for s in seeds]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(one, seeds))


def clt_test(alg, schedule: StepsizeSchedule, f: str, replicates: int = 200, n: int = 20000,
             sigma: str = "replication", burn_in: int = 0, seed: int = 0,
             workers: int = 1) -> CltReport:
    """KS test of standardized ergodic averages against ``N(0, 1)``.

    Each replicate runs ``burn_in + n`` steps and averages the last ``n``.

    Raises:
        ValueError: if fewer than 100 replicates are requested.
    """
    if replicates < 100:
        raise ValueError("clt_test needs at least 100 replicates")
    if sigma not in ("replication", "batch_means"):
        raise ValueError(f"unknown sigma method {sigma!r}")
    pi_f = target_expectation(alg.target, f)
    traces = run_replicates(alg, schedule, burn_in + n, replicates, seed, workers=workers)
    vals = [evaluate_function(f, tr.x[burn_in:]) for tr in traces]
    scaled = np.array([np.sqrt(n) * (v.mean() - pi_f) for v in vals])
    if sigma == "replication":
        sig = np.full(replicates, scaled.std(ddof=1))
    else:
        sig = np.sqrt([batch_means(v) for v in vals])
    z = scaled / sig
    ks = stats.kstest(z, "norm")
    return CltReport(replicates, n, burn_in, f, sigma, float(np.mean(sig)), z,
                     float(ks.statistic), float(ks.pvalue),
                     np.array([tr.final_kappa for tr in traces]))


# ---------------------------------------------------------------------------
# drift, minorization, kernel regularity
# ---------------------------------------------------------------------------

def log_drift_function(t: TargetModel, eta: float):
    """``log V`` for ``V = (pi / sup pi)^-eta``."""
    if not 0.0 < eta < 1.0:
        raise ValueError("eta must lie in (0, 1)")
    log_sup = log_sup_density(t)
    return lambda X: -eta * (log_density_batch(t, X) - log_sup)


def drift_bound(eta: float) -> float:
    """``sup_{0<=u<=1} (1 - u + u^(1 - eta))``, attained at ``u = (1-eta)^(1/eta)``."""
    u = (1.0 - eta) ** (1.0 / eta)
    return 1.0 - u + u ** (1.0 - eta)


@dataclass
class DriftRow:
    x: np.ndarray
    ratio: float
    std_error: float


def drift_probe(kernel, v, points, draws: int, rng: np.random.Generator) -> list[DriftRow]:
    """Monte Carlo ``P V(x) / V(x)`` at each probe point.

    Args:
        kernel: an :class:`SrwmKernel` or :class:`ImhKernel`.
        v: ``eta`` in (0, 1) for ``V = (pi / sup pi)^-eta``, or a callable
            returning ``log V`` for an ``(n, d)`` array.
        points: probe points.
        draws: kernel steps per point.
    """
    step = srwm_step if isinstance(kernel, SrwmKernel) else imh_step
    if not isinstance(kernel, (SrwmKernel, ImhKernel)):
        raise TypeError("kernel must be an SrwmKernel or an ImhKernel")
    log_v = v if callable(v) else log_drift_function(kernel.target, float(v))
    rows = []
    for x in points:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        ys = np.array([step(kernel, x, rng).new_x for _ in range(draws)])
        r = np.exp(log_v(ys) - log_v(x[None, :])[0])
        rows.append(DriftRow(x, float(r.mean()), float(r.std(ddof=1) / np.sqrt(draws))))
    return rows


def safeguard_infimum(log_q, t: TargetModel, starts=None) -> float:
    """``inf_x q(x) / pi(x)`` by local ascent of ``log pi - log q``.

    Ascent starts at the target component means plus any extra ``starts``.
    Only meaningful when ``q`` has heavier tails than ``pi``.
    """
    def neg(x):
        return -(log_density(t, x) - log_q(x))

    best = -np.inf
    for s in list(t.means) + list(starts or []):
        res = optimize.minimize(neg, np.asarray(s, dtype=float), method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 10000})
        best = max(best, -res.fun, -neg(np.asarray(s, dtype=float)))
    return float(np.exp(-best))


@dataclass
class MinorizationReport:
    eps_hat: float
    argmin: np.ndarray
    lower_bound: float | None = None

    @property
    def passed(self) -> bool | None:
        if self.lower_bound is None:
            return None
        return bool(self.eps_hat >= 0.5 * self.lower_bound)


def _probe_grid(t: TargetModel, half_width: float = 8.0, size: int = 2001) -> np.ndarray:
    mu, cov = exact_moments(t)
    sd = np.sqrt(np.diag(cov))
    pts = [t.means, mu[None, :]]
    for i in range(t.dim):
        line = np.repeat(mu[None, :], size, axis=0)
        line[:, i] = mu[i] + np.linspace(-half_width, half_width, size) * sd[i]
        pts.append(line)
    return np.concatenate(pts)


def minorization_probe(log_q, t: TargetModel, n: int, rng: np.random.Generator,
                       lower_bound: float | None = None) -> MinorizationReport:
    """Smallest observed ``q(x) / pi(x)`` over target draws plus a coarse grid.

    Args:
        log_q: callable returning the proposal log-density of an ``(n, d)`` array.
        lower_bound: analytic ``iota * e`` to report alongside, if known.
    """
    X = np.concatenate([exact_samples(t, n, rng), _probe_grid(t)])
    log_ratio = log_q(X) - log_density_batch(t, X)
    i = int(np.argmin(log_ratio))
    return MinorizationReport(float(np.exp(log_ratio[i])), X[i], lower_bound)


@dataclass
class LipschitzReport:
    max_ratio: float
    bound: float
    rows: list

    @property
    def passed(self) -> bool:
        return bool(all(r["ratio"] <= self.bound + 3.0 * r["ratio_se"] for r in self.rows))


def kernel_lipschitz_probe(t: TargetModel, gamma_pairs, f, x_points, draws: int,
                           lambda_min: float, rng: np.random.Generator,
                           f_sup: float = 1.0) -> LipschitzReport:
    """Compares ``P_Gamma f(x)`` and ``P_Gamma' f(x)`` with common random numbers.

    Kernels are random-walk Metropolis with ``N(0, Gamma)`` increments. The
    reference constant is ``2 d / lambda_min * sup|f|`` with the Frobenius
    distance ``|Gamma - Gamma'|``.
    """
    d = t.dim
    bound = 2.0 * d / lambda_min * f_sup
    rows = []
    for g1, g2 in gamma_pairs:
        g1 = np.atleast_2d(np.asarray(g1, dtype=float))
        g2 = np.atleast_2d(np.asarray(g2, dtype=float))
        dist = float(np.linalg.norm(g1 - g2))
        L1, L2 = np.linalg.cholesky(g1), np.linalg.cholesky(g2)
        for x in x_points:
            x = np.atleast_1d(np.asarray(x, dtype=float))
            z = rng.standard_normal((draws, d))
            log_u = np.log(rng.random(draws))
            lp_x = log_density(t, x)
            outs = []
            for L in (L1, L2):
                y = x + z @ L.T
                acc = log_u < np.minimum(0.0, log_density_batch(t, y) - lp_x)
                outs.append(f(np.where(acc[:, None], y, x)))
            diff = outs[0] - outs[1]
            mean = float(diff.mean())
            se = float(diff.std(ddof=1) / np.sqrt(draws)) if draws > 1 else 0.0
            ratio = abs(mean) / dist if dist > 0 else 0.0
            rows.append({"x": x.tolist(), "dist": dist, "diff": mean, "diff_se": se,
                         "ratio": ratio, "ratio_se": se / dist if dist > 0 else 0.0})
    return LipschitzReport(max((r["ratio"] for r in rows), default=0.0), bound, rows)


# ---------------------------------------------------------------------------
# two-state counterexample
# ---------------------------------------------------------------------------

def two_state_matrix(theta1: float, theta2: float) -> np.ndarray:
    """Chain whose flip probability depends on the current state."""
    return np.array([[1.0 - theta1, theta1], [theta2, 1.0 - theta2]])


def stationary_distribution(P) -> np.ndarray:
    """Left eigenvector of ``P`` for eigenvalue 1, normalized to sum 1."""
    w, vl = np.linalg.eig(np.asarray(P, dtype=float).T)
    v = np.real(vl[:, np.argmin(np.abs(w - 1.0))])
    return v / v.sum()


@dataclass
class TwoStateReport:
    adaptive_invariant: np.ndarray
    closed_form: np.ndarray
    fixed_invariants: np.ndarray
    simulated: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {k: (None if v is None else np.asarray(v).tolist())
                for k, v in self.__dict__.items()}


@numba.njit(cache=True)
def _simulate_two_state(rng, theta1, theta2, steps):
    counts = np.zeros(2)
    s = 0
    for _ in range(steps):
        flip = theta1 if s == 0 else theta2
        if rng.random() < flip:
            s = 1 - s
        counts[s] += 1.0
    return counts / steps


def two_state_oracle(theta1: float, theta2: float, fixed_thetas=None, simulate_steps: int = 0,
                     rng: np.random.Generator | None = None) -> TwoStateReport:
    """Invariant laws of the state-dependent chain and of fixed-parameter chains.

    Every fixed-parameter chain keeps ``(1/2, 1/2)`` invariant, yet letting the
    parameter follow the state (``theta_k = theta(X_k)``) moves the invariant
    law to ``(theta2, theta1) / (theta1 + theta2)``.
    """
    for v in (theta1, theta2):
        if not 0.0 < v < 1.0:
            raise ValueError("two-state parameters must lie in (0, 1)")
    fixed = np.linspace(0.05, 0.95, 19) if fixed_thetas is None else np.asarray(fixed_thetas)
    inv = stationary_distribution(two_state_matrix(theta1, theta2))
    closed = np.array([theta2, theta1]) / (theta1 + theta2)
    fixed_inv = np.array([stationary_distribution(two_state_matrix(th, th)) for th in fixed])
    sim = None
    if simulate_steps:
        sim = _simulate_two_state(rng or np.random.default_rng(0), theta1, theta2,
                                  int(simulate_steps))
    return TwoStateReport(inv, closed, fixed_inv, sim)
