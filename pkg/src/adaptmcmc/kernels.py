"""Metropolis-Hastings kernels: Gaussian random walk and independence sampler.

Draw order per step is fixed so traces reproduce bit for bit:

* random walk: ``dim`` standard normals for the increment, then one uniform;
* independence sampler: one uniform choosing safeguard vs adaptive part,
  then (adaptive part, more than one component) one uniform for the
  component, then ``dim`` standard normals (plus one gamma variate for a
  Student-t safeguard), then the acceptance uniform.

A proposal is accepted iff ``log(U) < log_alpha``; ties reject.
"""
import math
from dataclasses import dataclass

import numba
import numpy as np

from .mathcore import (
    FactoredGaussian,
    LOG_2PI,
    draw_chol,
    factorize,
    logpdf_chol,
    mixture_logpdf,
)
from .target import TargetModel, log_density, mixture_draw

GAUSSIAN, STUDENT_T = 0, 1


# ---------------------------------------------------------------------------
# compiled cores
# ---------------------------------------------------------------------------

@numba.njit(cache=True)
def srwm_step_core(rng, x, inc_chol, t_logw, t_means, t_chols):
    y = draw_chol(rng, x, inc_chol)
    log_alpha = min(0.0, mixture_logpdf(y, t_logw, t_means, t_chols)
                    - mixture_logpdf(x, t_logw, t_means, t_chols))
    u = rng.random()
    if np.log(u) < log_alpha:
        return y, y, True, log_alpha
    return x.copy(), y, False, log_alpha


@numba.njit(cache=True)
def safeguard_logpdf(x, kind, loc, chol, df):
    if kind == GAUSSIAN:
        return logpdf_chol(x, loc, chol)
    d = x.shape[0]
    # Student-t through the Gaussian quadratic form
    quad = -2.0 * (logpdf_chol(x, loc, chol) + 0.5 * d * LOG_2PI)
    logdet = 0.0
    for i in range(d):
        logdet += np.log(chol[i, i])
    quad -= 2.0 * logdet
    return (math.lgamma(0.5 * (df + d)) - math.lgamma(0.5 * df)
            - 0.5 * d * np.log(df * np.pi) - logdet
            - 0.5 * (df + d) * np.log1p(quad / df))


@numba.njit(cache=True)
def safeguard_draw(rng, kind, loc, chol, df):
    if kind == GAUSSIAN:
        return draw_chol(rng, loc, chol)
    d = loc.shape[0]
    z = draw_chol(rng, np.zeros(d), chol)
    g = 2.0 * rng.standard_gamma(0.5 * df) / df
    return loc + z / np.sqrt(g)


@numba.njit(cache=True)
def proposal_logpdf_core(x, iota, a_logw, a_means, a_chols, s_kind, s_loc, s_chol, s_df):
    la = np.log1p(-iota) + mixture_logpdf(x, a_logw, a_means, a_chols)
    ls = np.log(iota) + safeguard_logpdf(x, s_kind, s_loc, s_chol, s_df)
    m = max(la, ls)
    if not np.isfinite(m):
        return m
    return m + np.log(np.exp(la - m) + np.exp(ls - m))


@numba.njit(cache=True)
def proposal_draw_core(rng, iota, a_w, a_means, a_chols, s_kind, s_loc, s_chol, s_df):
    if rng.random() < iota:
        return safeguard_draw(rng, s_kind, s_loc, s_chol, s_df)
    return mixture_draw(rng, a_w, a_means, a_chols)


@numba.njit(cache=True)
def imh_step_core(rng, x, t_logw, t_means, t_chols,
                  iota, a_w, a_logw, a_means, a_chols, s_kind, s_loc, s_chol, s_df):
    y = proposal_draw_core(rng, iota, a_w, a_means, a_chols, s_kind, s_loc, s_chol, s_df)
    wy = (mixture_logpdf(y, t_logw, t_means, t_chols)
          - proposal_logpdf_core(y, iota, a_logw, a_means, a_chols, s_kind, s_loc, s_chol, s_df))
    wx = (mixture_logpdf(x, t_logw, t_means, t_chols)
          - proposal_logpdf_core(x, iota, a_logw, a_means, a_chols, s_kind, s_loc, s_chol, s_df))
    log_alpha = min(0.0, wy - wx)
    u = rng.random()
    if np.log(u) < log_alpha:
        return y, y, True, log_alpha
    return x.copy(), y, False, log_alpha


# ---------------------------------------------------------------------------
# Python API
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepOutcome:
    new_x: np.ndarray
    proposed_x: np.ndarray
    accepted: bool
    log_accept_prob: float


@dataclass(frozen=True)
class SrwmKernel:
    """Random-walk Metropolis with zero-mean Gaussian increments."""

    target: TargetModel
    increment: FactoredGaussian

    def __post_init__(self):
        if np.any(self.increment.mean != 0.0):
            raise ValueError("random-walk increment must have zero mean")
        if self.increment.dim != self.target.dim:
            raise ValueError("increment and target dimensions differ")

    @classmethod
    def from_covariance(cls, target: TargetModel, cov) -> "SrwmKernel":
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        return cls(target, FactoredGaussian(np.zeros(cov.shape[0]), factorize(cov)))


@dataclass(frozen=True)
class Safeguard:
    """Fixed heavy proposal component: Gaussian or multivariate Student-t."""

    kind: str
    loc: np.ndarray
    chol: np.ndarray
    df: float = 4.0

    @classmethod
    def gaussian(cls, loc, cov) -> "Safeguard":
        return cls("gaussian", np.atleast_1d(np.asarray(loc, float)), factorize(cov), np.inf)

    @classmethod
    def student_t(cls, loc, scale, df=4.0) -> "Safeguard":
        return cls("student_t", np.atleast_1d(np.asarray(loc, float)), factorize(scale), float(df))

    @property
    def code(self) -> int:
        return GAUSSIAN if self.kind == "gaussian" else STUDENT_T

    def args(self):
        return self.code, self.loc, self.chol, (self.df if self.code == STUDENT_T else 0.0)

    def logpdf(self, x) -> float:
        return float(safeguard_logpdf(np.atleast_1d(np.asarray(x, float)), *self.args()))


@dataclass(frozen=True)
class MixtureProposal:
    """``(1 - iota) * adaptive + iota * safeguard``.

    ``adaptive`` is any Gaussian mixture exposing ``weights``, ``means``
    and ``chols`` (a :class:`~adaptmcmc.mixture_em.MixtureXi` or a
    :class:`~adaptmcmc.target.TargetModel`).
    """

    adaptive: object
    safeguard: Safeguard
    iota: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.iota < 1.0:
            raise ValueError("iota out of (0,1)")
        w = np.asarray(self.adaptive.weights)
        if np.any(w <= 0.0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("adaptive weights must be positive and sum to 1")

    def args(self):
        a = self.adaptive
        return (self.iota, a.weights, np.log(a.weights), a.means, a.chols) + self.safeguard.args()

    def logpdf_args(self):
        iota, _, logw, means, chols, *s = self.args()
        return (iota, logw, means, chols, *s)

    def draw_args(self):
        iota, w, _, means, chols, *s = self.args()
        return (iota, w, means, chols, *s)


@dataclass(frozen=True)
class ImhKernel:
    target: TargetModel
    proposal: MixtureProposal


def _pt(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=float))


def srwm_log_accept(t: TargetModel, x, y) -> float:
    return min(0.0, log_density(t, y) - log_density(t, x))


def srwm_step(k: SrwmKernel, x, rng: np.random.Generator) -> StepOutcome:
    t = k.target
    new, prop, acc, la = srwm_step_core(rng, _pt(x), k.increment.lower_factor,
                                        t.log_weights, t.means, t.chols)
    return StepOutcome(new, prop, bool(acc), float(la))


def mixture_proposal_logpdf(p: MixtureProposal, x) -> float:
    return float(proposal_logpdf_core(_pt(x), *p.logpdf_args()))


def mixture_proposal_sample(p: MixtureProposal, rng: np.random.Generator) -> np.ndarray:
    return proposal_draw_core(rng, *p.draw_args())


def imh_log_accept(t: TargetModel, p: MixtureProposal, x, y) -> float:
    wy = log_density(t, y) - mixture_proposal_logpdf(p, y)
    wx = log_density(t, x) - mixture_proposal_logpdf(p, x)
    return min(0.0, wy - wx)


def imh_step(k: ImhKernel, x, rng: np.random.Generator) -> StepOutcome:
    t = k.target
    iota, w, logw, means, chols, *s = k.proposal.args()
    new, prop, acc, la = imh_step_core(rng, _pt(x), t.log_weights, t.means, t.chols,
                                       iota, w, logw, means, chols, *s)
    return StepOutcome(new, prop, bool(acc), float(la))
