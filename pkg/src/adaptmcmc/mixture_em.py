"""Online EM for a Gaussian-mixture proposal.

The adapted parameter is the vector of normalized sufficient statistics
``theta = (s0_j, s1_j, s2_j)_j`` (mass, first and second moments per
component). The M-step maps it to mixture parameters ``xi``; the update
field is ``H(theta, x) = E_xi[T(x, z) | x] - theta``.
"""
from dataclasses import dataclass

import numba
import numpy as np

from .mathcore import chol_lower, logpdf_chol, mixture_logpdf_batch
from .target import TargetModel, exact_samples, log_density_batch

OK, DEGENERATE = 0, 1


class DegenerateComponent(ValueError):
    """A component has non-positive mass; the M-step is undefined."""


# ---------------------------------------------------------------------------
# compiled cores
# ---------------------------------------------------------------------------

@numba.njit(cache=True)
def mstep_core(s0, s1, s2, weight_floor, cov_floor):
    """Returns ``(weights, means, covs, chols, status, floored)``."""
    m, d = s1.shape
    w = np.empty(m)
    means = np.empty((m, d))
    covs = np.empty((m, d, d))
    chols = np.zeros((m, d, d))
    floored = False
    for j in range(m):
        if not (s0[j] > 0.0):
            return w, means, covs, chols, DEGENERATE, floored
    total = s0.sum()
    for j in range(m):
        w[j] = s0[j] / total
        if w[j] < weight_floor:
            w[j] = weight_floor
            floored = True
    w /= w.sum()
    for j in range(m):
        mj = s1[j] / s0[j]
        means[j] = mj
        c = s2[j] / s0[j]
        for a in range(d):
            for b in range(d):
                c[a, b] -= mj[a] * mj[b]
        c = 0.5 * (c + c.T)
        if np.linalg.eigvalsh(c)[0] < cov_floor:
            vals, vecs = np.linalg.eigh(c)
            for a in range(d):
                if vals[a] < cov_floor:
                    vals[a] = cov_floor
            c = (vecs * vals) @ vecs.T
            c = 0.5 * (c + c.T)
            floored = True
        covs[j] = c
        L, ok = chol_lower(c)
        if not ok:
            return w, means, covs, chols, DEGENERATE, floored
        chols[j] = L
    return w, means, covs, chols, OK, floored


@numba.njit(cache=True)
def log_weights_core(w):
    return np.log(w)


@numba.njit(cache=True)
def responsibilities_core(x, logw, means, chols):
    m = logw.shape[0]
    lp = np.empty(m)
    for j in range(m):
        lp[j] = logw[j] + logpdf_chol(x, means[j], chols[j])
    r = np.exp(lp - lp.max())
    return r / r.sum()


@numba.njit(cache=True)
def em_advance(s0, s1, s2, step, x, weight_floor, cov_floor):
    """``theta + step * (E[T | x] - theta)`` under ``xi = mstep(theta)``."""
    w, means, covs, chols, status, floored = mstep_core(s0, s1, s2, weight_floor, cov_floor)
    if status != OK:
        return s0.copy(), s1.copy(), s2.copy(), status
    r = responsibilities_core(x, np.log(w), means, chols)
    m, d = s1.shape
    n0 = np.empty(m)
    n1 = np.empty((m, d))
    n2 = np.empty((m, d, d))
    for j in range(m):
        n0[j] = s0[j] + step * (r[j] - s0[j])
        for a in range(d):
            n1[j, a] = s1[j, a] + step * (r[j] * x[a] - s1[j, a])
            for b in range(d):
                n2[j, a, b] = s2[j, a, b] + step * (r[j] * x[a] * x[b] - s2[j, a, b])
    return n0, n1, n2, OK


# ---------------------------------------------------------------------------
# Python API
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MixtureXi:
    """Gaussian mixture parameters with cached Cholesky factors."""

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    chols: np.ndarray
    floored: bool = False

    @classmethod
    def from_params(cls, weights, means, covs) -> "MixtureXi":
        w = np.atleast_1d(np.asarray(weights, dtype=float))
        means = np.asarray(means, dtype=float)
        if means.ndim == 1:
            means = means[:, None]
        covs = np.asarray(covs, dtype=float)
        if covs.ndim == 1:
            covs = covs[:, None, None]
        chols = []
        for c in covs:
            L, ok = chol_lower(np.ascontiguousarray(c))
            if not ok:
                raise ValueError("component covariance is not positive definite")
            chols.append(L)
        return cls(w, np.ascontiguousarray(means), covs, np.stack(chols))

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def log_weights(self) -> np.ndarray:
        return np.log(self.weights)

    def moments(self) -> tuple[np.ndarray, np.ndarray]:
        mu = self.weights @ self.means
        second = np.einsum("j,jab->ab", self.weights,
                           self.covs + np.einsum("ja,jb->jab", self.means, self.means))
        return mu, second - np.outer(mu, mu)

    def logpdf(self, X) -> np.ndarray:
        X = np.ascontiguousarray(np.asarray(X, dtype=float).reshape(-1, self.dim))
        return mixture_logpdf_batch(X, self.log_weights, self.means, self.chols)


@dataclass(frozen=True)
class MixtureSuffStats:
    """Per-component mass ``s0``, first moment ``s1``, second moment ``s2``."""

    s0: np.ndarray
    s1: np.ndarray
    s2: np.ndarray

    def __post_init__(self):
        s0 = np.atleast_1d(np.asarray(self.s0, dtype=float))
        s1 = np.asarray(self.s1, dtype=float)
        if s1.ndim == 1:
            s1 = s1[:, None]
        s2 = np.asarray(self.s2, dtype=float)
        if s2.ndim == 1:
            s2 = s2[:, None, None]
        m, d = s1.shape
        if s0.shape != (m,) or s2.shape != (m, d, d):
            raise ValueError("inconsistent sufficient-statistic shapes")
        object.__setattr__(self, "s0", np.ascontiguousarray(s0))
        object.__setattr__(self, "s1", np.ascontiguousarray(s1))
        object.__setattr__(self, "s2", np.ascontiguousarray(s2))

    @property
    def n_components(self) -> int:
        return self.s0.size

    @property
    def dim(self) -> int:
        return self.s1.shape[1]

    @classmethod
    def of_mixture(cls, xi: MixtureXi) -> "MixtureSuffStats":
        """Population statistics of a mixture (``mstep`` fixed point)."""
        w = xi.weights
        outer = np.einsum("ja,jb->jab", xi.means, xi.means)
        return cls(w.copy(), w[:, None] * xi.means, w[:, None, None] * (xi.covs + outer))

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.s0, self.s1.ravel(), self.s2.ravel()])

    @classmethod
    def unflatten(cls, v, m: int, d: int) -> "MixtureSuffStats":
        v = np.asarray(v, dtype=float)
        return cls(v[:m], v[m:m + m * d].reshape(m, d), v[m + m * d:].reshape(m, d, d))

    def __add__(self, other: "MixtureSuffStats") -> "MixtureSuffStats":
        return MixtureSuffStats(self.s0 + other.s0, self.s1 + other.s1, self.s2 + other.s2)

    def __sub__(self, other: "MixtureSuffStats") -> "MixtureSuffStats":
        return MixtureSuffStats(self.s0 - other.s0, self.s1 - other.s1, self.s2 - other.s2)

    def scaled(self, c: float) -> "MixtureSuffStats":
        return MixtureSuffStats(c * self.s0, c * self.s1, c * self.s2)


def _pt(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=float))


def responsibilities(xi: MixtureXi, x) -> np.ndarray:
    return responsibilities_core(_pt(x), xi.log_weights, xi.means, xi.chols)


def suffstat_expectation(xi: MixtureXi, x) -> MixtureSuffStats:
    x = _pt(x)
    r = responsibilities(xi, x)
    return MixtureSuffStats(r, r[:, None] * x, r[:, None, None] * np.outer(x, x))


def mstep(theta: MixtureSuffStats, weight_floor: float = 0.0,
          cov_floor: float = 0.0) -> MixtureXi:
    """Closed-form maximizer, with weight and covariance floors applied.

    Raises:
        DegenerateComponent: if some ``s0_j <= 0`` (or a floored covariance
            still fails to factorize).
    """
    w, means, covs, chols, status, floored = mstep_core(
        theta.s0, theta.s1, theta.s2, float(weight_floor), float(cov_floor))
    if status != OK:
        raise DegenerateComponent("mixture component has no mass")
    return MixtureXi(w, means, covs, chols, bool(floored))


def em_update_field(theta: MixtureSuffStats, x, weight_floor: float = 0.0,
                    cov_floor: float = 0.0) -> MixtureSuffStats:
    xi = mstep(theta, weight_floor, cov_floor)
    return suffstat_expectation(xi, x) - theta


def em_advance_stats(theta: MixtureSuffStats, step: float, x, weight_floor: float = 0.0,
                     cov_floor: float = 0.0) -> MixtureSuffStats:
    s0, s1, s2, status = em_advance(theta.s0, theta.s1, theta.s2, float(step), _pt(x),
                                    float(weight_floor), float(cov_floor))
    if status != OK:
        raise DegenerateComponent("mixture component has no mass")
    return MixtureSuffStats(s0, s1, s2)


def kl_estimate(t: TargetModel, xi: MixtureXi, n: int,
                rng: np.random.Generator) -> tuple[float, float]:
    """Monte Carlo ``KL(pi || q_xi)`` from exact target draws.

    Returns:
        The estimate and its standard error.
    """
    X = exact_samples(t, n, rng)
    diff = log_density_batch(t, X) - xi.logpdf(X)
    return float(diff.mean()), float(diff.std(ddof=1) / np.sqrt(n))


def batch_em_step(X, xi: MixtureXi) -> MixtureXi:
    """One classical EM iteration on a fixed data set (no floors)."""
    X = np.asarray(X, dtype=float).reshape(-1, xi.dim)
    stats = [suffstat_expectation(xi, x) for x in X]
    avg = MixtureSuffStats(np.mean([s.s0 for s in stats], axis=0),
                           np.mean([s.s1 for s in stats], axis=0),
                           np.mean([s.s2 for s in stats], axis=0))
    return mstep(avg)
