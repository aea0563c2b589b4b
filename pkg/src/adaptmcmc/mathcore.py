"""Dense linear algebra and Gaussian primitives shared by every sampler.

The numerical cores are compiled with numba so that the pure-Python
controller and the compiled chain engines execute the same arithmetic and
therefore produce bit-identical traces for a given seed.
"""
from dataclasses import dataclass

import numba
import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))
PIVOT_FLOOR = 1e-300
SYMMETRY_TOL = 1e-12


class NotPositiveDefinite(ValueError):
    """Raised when a Cholesky pivot falls below the pivot floor."""


# ---------------------------------------------------------------------------
# compiled primitives
# ---------------------------------------------------------------------------

@numba.njit(cache=True)
def chol_lower(a):
    """Returns ``(L, ok)``; ``ok`` is False if some pivot is <= PIVOT_FLOOR."""
    n = a.shape[0]
    L = np.zeros((n, n))
    for j in range(n):
        s = a[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if not (s > PIVOT_FLOOR):
            return L, False
        d = np.sqrt(s)
        L[j, j] = d
        for i in range(j + 1, n):
            t = a[i, j]
            for k in range(j):
                t -= L[i, k] * L[j, k]
            L[i, j] = t / d
    return L, True


@numba.njit(cache=True)
def logpdf_chol(x, mean, L):
    """Gaussian log-density from a lower Cholesky factor (forward solve)."""
    n = x.shape[0]
    z = np.empty(n)
    quad = 0.0
    logdet = 0.0
    for i in range(n):
        t = x[i] - mean[i]
        for k in range(i):
            t -= L[i, k] * z[k]
        z[i] = t / L[i, i]
        quad += z[i] * z[i]
        logdet += np.log(L[i, i])
    return -0.5 * quad - logdet - 0.5 * n * LOG_2PI


@numba.njit(cache=True)
def draw_chol(rng, mean, L):
    """``mean + L z`` with ``z`` drawn coordinate by coordinate from ``rng``."""
    n = mean.shape[0]
    z = np.empty(n)
    for i in range(n):
        z[i] = rng.standard_normal()
    out = mean.copy()
    for i in range(n):
        for k in range(i + 1):
            out[i] += L[i, k] * z[k]
    return out


@numba.njit(cache=True)
def logsumexp(v):
    m = v.max()
    if not np.isfinite(m):
        return m
    s = 0.0
    for i in range(v.shape[0]):
        s += np.exp(v[i] - m)
    return m + np.log(s)


@numba.njit(cache=True)
def mixture_logpdf(x, log_weights, means, chols):
    m = log_weights.shape[0]
    terms = np.empty(m)
    for j in range(m):
        terms[j] = log_weights[j] + logpdf_chol(x, means[j], chols[j])
    return logsumexp(terms)


@numba.njit(cache=True)
def mixture_logpdf_batch(X, log_weights, means, chols):
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        out[i] = mixture_logpdf(X[i], log_weights, means, chols)
    return out


@numba.njit(cache=True)
def pick_component(u, weights):
    """Inverse-CDF choice of a component index from one uniform."""
    c = 0.0
    m = weights.shape[0]
    for j in range(m - 1):
        c += weights[j]
        if u < c:
            return j
    return m - 1


@numba.njit(cache=True)
def sym_eig_bounds(a):
    w = np.linalg.eigvalsh(a)
    return w[0], w[-1]


# ---------------------------------------------------------------------------
# Python API
# ---------------------------------------------------------------------------

def as_symmetric(m) -> np.ndarray:
    """Validates a square symmetric matrix and returns it as float64."""
    a = np.atleast_2d(np.asarray(m, dtype=float))
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if np.any(np.abs(a - a.T) > SYMMETRY_TOL):
        raise ValueError("matrix is not symmetric")
    return a


def factorize(m) -> np.ndarray:
    """Lower Cholesky factor ``L`` with ``L @ L.T == m``.

    Raises:
        NotPositiveDefinite: if a pivot is <= 1e-300.
    """
    a = as_symmetric(m)
    L, ok = chol_lower(np.ascontiguousarray(a))
    if not ok:
        raise NotPositiveDefinite("matrix is not positive definite")
    return L


@dataclass(frozen=True)
class FactoredGaussian:
    """``N(mean, L L^T)`` stored through its lower triangular factor."""

    mean: np.ndarray
    lower_factor: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        L = np.atleast_2d(np.asarray(self.lower_factor, dtype=float))
        if L.shape != (mean.size, mean.size):
            raise ValueError("factor shape does not match mean")
        if np.any(np.triu(L, 1) != 0.0):
            raise ValueError("factor must be lower triangular")
        if not np.all(np.diag(L) > 0.0):
            raise ValueError("factor diagonal must be strictly positive")
        object.__setattr__(self, "mean", np.ascontiguousarray(mean))
        object.__setattr__(self, "lower_factor", np.ascontiguousarray(L))

    @classmethod
    def from_covariance(cls, mean, cov) -> "FactoredGaussian":
        return cls(mean, factorize(cov))

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def covariance(self) -> np.ndarray:
        return self.lower_factor @ self.lower_factor.T


def mvn_sample(g: FactoredGaussian, rng: np.random.Generator) -> np.ndarray:
    """One draw ``mean + L z``; consumes exactly ``dim`` standard normals."""
    return draw_chol(rng, g.mean, g.lower_factor)


def mvn_logpdf(g: FactoredGaussian, x) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != g.mean.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {g.mean.shape}")
    return float(logpdf_chol(x, g.mean, g.lower_factor))


def eigen_bounds(m) -> tuple[float, float]:
    """Smallest and largest eigenvalue of a symmetric matrix."""
    lo, hi = sym_eig_bounds(np.ascontiguousarray(as_symmetric(m)))
    return float(lo), float(hi)
