"""Covariance adaptation for the random-walk sampler.

The parameter is ``theta = (mu, Gamma)``; the update field is
``H(theta, x) = (x - mu, (x - mu)(x - mu)^T - Gamma)`` and the recursion is
``theta <- theta + gamma * H(theta, x)``. Positivity of ``Gamma`` is not
enforced here: leaving the positive cone is handled by the truncation sets
of the controller.
"""
from dataclasses import dataclass

import numba
import numpy as np

from .kernels import SrwmKernel
from .mathcore import FactoredGaussian, NotPositiveDefinite, factorize
from .target import TargetModel, exact_moments


@numba.njit(cache=True)
def nsrwm_advance(mu, gamma, step, x):
    """One stochastic-approximation step; ``gamma`` is re-symmetrized."""
    d = mu.shape[0]
    v = x - mu
    mu_new = mu + step * v
    g = np.empty((d, d))
    for i in range(d):
        for j in range(d):
            g[i, j] = gamma[i, j] + step * (v[i] * v[j] - gamma[i, j])
    return mu_new, 0.5 * (g + g.T)


@dataclass(frozen=True)
class AdaptParam:
    """``(mu, Gamma)``; also used for field increments."""

    mu: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        g = np.atleast_2d(np.asarray(self.gamma, dtype=float))
        if g.shape != (mu.size, mu.size):
            raise ValueError("gamma shape does not match mu")
        object.__setattr__(self, "mu", np.ascontiguousarray(mu))
        object.__setattr__(self, "gamma", np.ascontiguousarray(g))

    @property
    def dim(self) -> int:
        return self.mu.size

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.mu, self.gamma.ravel()])

    @classmethod
    def unflatten(cls, v, dim: int) -> "AdaptParam":
        v = np.asarray(v, dtype=float)
        return cls(v[:dim], v[dim:].reshape(dim, dim))

    def __add__(self, other: "AdaptParam") -> "AdaptParam":
        return AdaptParam(self.mu + other.mu, self.gamma + other.gamma)

    def scaled(self, c: float) -> "AdaptParam":
        return AdaptParam(c * self.mu, c * self.gamma)


def update_field(theta: AdaptParam, x) -> AdaptParam:
    v = np.atleast_1d(np.asarray(x, dtype=float)) - theta.mu
    return AdaptParam(v, np.outer(v, v) - theta.gamma)


def advance(theta: AdaptParam, step: float, x) -> AdaptParam:
    """``theta + step * H(theta, x)``, computed by the compiled core."""
    mu, g = nsrwm_advance(theta.mu, theta.gamma, float(step),
                          np.atleast_1d(np.asarray(x, dtype=float)))
    return AdaptParam(mu, g)


def mean_field(theta: AdaptParam, t: TargetModel) -> AdaptParam:
    mu_pi, gamma_pi = exact_moments(t)
    dm = mu_pi - theta.mu
    return AdaptParam(dm, np.outer(dm, dm) + gamma_pi - theta.gamma)


def _inv(gamma) -> np.ndarray:
    L = factorize(gamma)
    Linv = np.linalg.inv(L)
    return Linv.T @ Linv


def lyapunov(theta: AdaptParam, t: TargetModel) -> float:
    """``log det Gamma + (mu - mu_pi)^T Gamma^-1 (mu - mu_pi) + tr(Gamma^-1 Gamma_pi)``."""
    mu_pi, gamma_pi = exact_moments(t)
    L = factorize(theta.gamma)
    A = _inv(theta.gamma)
    d = theta.mu - mu_pi
    return float(2.0 * np.log(np.diag(L)).sum() + d @ A @ d + np.trace(A @ gamma_pi))


def lyapunov_decay(theta: AdaptParam, t: TargetModel, cross_term: bool = True) -> float:
    """Inner product of the Lyapunov gradient with the mean field.

    With ``A = Gamma^-1``, ``d = mu - mu_pi`` and ``D = Gamma - Gamma_pi``
    this is ``-2 d'Ad - tr(ADAD) + 2 d'ADAd - (d'Ad)^2``. The cross term
    ``2 d'ADAd`` is needed for agreement with the gradient of
    :func:`lyapunov`; ``cross_term=False`` drops it. Both forms are <= 0.

    Raises:
        NotPositiveDefinite: if ``Gamma`` is not positive definite.
    """
    mu_pi, gamma_pi = exact_moments(t)
    A = _inv(theta.gamma)
    d = theta.mu - mu_pi
    D = theta.gamma - gamma_pi
    q = float(d @ A @ d)
    ADA = A @ D @ A
    value = -2.0 * q - float(np.trace(ADA @ D)) - q * q
    if cross_term:
        value += 2.0 * float(d @ ADA @ d)
    return value


def kernel_of(theta: AdaptParam, t: TargetModel, lam: float) -> SrwmKernel:
    """Random-walk kernel with increment covariance ``lam * Gamma``.

    Raises:
        NotPositiveDefinite: if ``Gamma`` is singular or indefinite.
    """
    if lam <= 0.0:
        raise ValueError("lambda must be positive")
    L = factorize(lam * theta.gamma)
    return SrwmKernel(t, FactoredGaussian(np.zeros(theta.dim), L))


__all__ = [
    "AdaptParam", "NotPositiveDefinite", "advance", "kernel_of", "lyapunov",
    "lyapunov_decay", "mean_field", "update_field",
]
