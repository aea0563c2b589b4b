"""Target distributions: Gaussians and finite Gaussian mixtures.

Both kinds are stored in the same mixture layout (a Gaussian is a
one-component mixture) so the compiled engines only need one density
routine. Densities are normalized, which the KL diagnostics rely on.
"""
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import optimize

from .mathcore import (
    draw_chol,
    factorize,
    mixture_logpdf,
    mixture_logpdf_batch,
    pick_component,
)

KINDS = ("gaussian", "gaussian_mixture")


@numba.njit(cache=True)
def mixture_draw(rng, weights, means, chols):
    """Component index from one uniform, then a Gaussian draw."""
    if weights.shape[0] == 1:
        j = 0
    else:
        j = pick_component(rng.random(), weights)
    return draw_chol(rng, means[j], chols[j])


@numba.njit(cache=True)
def mixture_draw_batch(rng, n, weights, means, chols):
    out = np.empty((n, means.shape[1]))
    for i in range(n):
        out[i] = mixture_draw(rng, weights, means, chols)
    return out


@dataclass(frozen=True)
class TargetModel:
    """A normalized Gaussian or Gaussian-mixture density on R^d.

    Use :func:`gaussian` and :func:`gaussian_mixture` to build instances.
    """

    kind: str
    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    chols: np.ndarray = field(repr=False)
    log_weights: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return self.weights.size

    def to_dict(self) -> dict:
        if self.kind == "gaussian":
            return {"kind": "gaussian", "mean": self.means[0].tolist(),
                    "cov": self.covs[0].tolist()}
        return {"kind": "gaussian_mixture", "weights": self.weights.tolist(),
                "means": self.means.tolist(), "covs": self.covs.tolist()}


def _build(kind, weights, means, covs) -> TargetModel:
    weights = np.atleast_1d(np.asarray(weights, dtype=float))
    means = np.asarray(means, dtype=float)
    if means.ndim == 1:
        # one scalar mean per component (1D target)
        means = means[:, None]
    covs = np.asarray(covs, dtype=float)
    m, d = means.shape
    if covs.ndim == 1:
        covs = covs[:, None, None]
    if weights.shape != (m,) or covs.shape != (m, d, d):
        raise ValueError("inconsistent mixture parameter shapes")
    if np.any(weights <= 0.0) or abs(weights.sum() - 1.0) > 1e-12:
        raise ValueError("mixture weights must be positive and sum to 1")
    chols = np.stack([factorize(c) for c in covs])
    return TargetModel(kind, weights, np.ascontiguousarray(means), covs,
                       chols, np.log(weights))


def gaussian(mean, cov) -> TargetModel:
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    return _build("gaussian", [1.0], mean[None, :], cov[None, :, :])


def gaussian_mixture(weights, means, covs) -> TargetModel:
    return _build("gaussian_mixture", weights, means, covs)


def from_dict(block: dict) -> TargetModel:
    kind = block.get("kind")
    if kind == "gaussian":
        return gaussian(block["mean"], block["cov"])
    if kind == "gaussian_mixture":
        return gaussian_mixture(block["weights"], block["means"], block["covs"])
    raise ValueError(f"unknown target kind {kind!r}; expected one of {KINDS}")


def _vec(t: TargetModel, x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (t.dim,):
        raise ValueError(f"expected a point of dimension {t.dim}")
    return x


def log_density(t: TargetModel, x) -> float:
    return float(mixture_logpdf(_vec(t, x), t.log_weights, t.means, t.chols))


def log_density_batch(t: TargetModel, X) -> np.ndarray:
    X = np.ascontiguousarray(np.asarray(X, dtype=float).reshape(-1, t.dim))
    return mixture_logpdf_batch(X, t.log_weights, t.means, t.chols)


def grad_log_density(t: TargetModel, x) -> np.ndarray:
    x = _vec(t, x)
    logs = np.array([
        lw + mixture_logpdf(x, np.zeros(1), mu[None], L[None])
        for lw, mu, L in zip(t.log_weights, t.means, t.chols)
    ])
    r = np.exp(logs - logs.max())
    r /= r.sum()
    g = np.zeros(t.dim)
    for rj, mu, c in zip(r, t.means, t.covs):
        g -= rj * np.linalg.solve(c, x - mu)
    return g


def exact_moments(t: TargetModel) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of the target (law of total variance)."""
    w = t.weights
    mu = w @ t.means
    second = np.einsum("j,jab->ab", w, t.covs + np.einsum("ja,jb->jab", t.means, t.means))
    return mu, second - np.outer(mu, mu)


def exact_sample(t: TargetModel, rng: np.random.Generator) -> np.ndarray:
    return mixture_draw(rng, t.weights, t.means, t.chols)


def exact_samples(t: TargetModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` i.i.d. draws; identical to ``n`` successive :func:`exact_sample` calls."""
    return mixture_draw_batch(rng, int(n), t.weights, t.means, t.chols)


def log_sup_density(t: TargetModel) -> float:
    """``log sup_x pi(x)``, by local ascent from each component mean."""
    if t.n_components == 1:
        return log_density(t, t.means[0])
    best = -np.inf
    for mu in t.means:
        res = optimize.minimize(lambda x: -log_density(t, x), mu,
                                jac=lambda x: -grad_log_density(t, x), method="BFGS",
                                options={"gtol": 1e-10})
        best = max(best, -res.fun, log_density(t, mu))
    return float(best)


def superexp_probe(t: TargetModel, directions, radii) -> np.ndarray:
    """Radial log-gradient ``<x/|x|, grad log pi(x)>`` at ``x = r d``.

    Rows follow ``directions``, columns follow ``radii``. Values should
    decrease without bound along every ray for a super-exponential target;
    this is a report, not a verdict.
    """
    out = np.empty((len(directions), len(radii)))
    for i, d in enumerate(directions):
        d = np.atleast_1d(np.asarray(d, dtype=float))
        d = d / np.linalg.norm(d)
        for j, r in enumerate(radii):
            out[i, j] = d @ grad_log_density(t, r * d)
    return out
