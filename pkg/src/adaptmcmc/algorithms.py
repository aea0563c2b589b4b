"""The two shipped adaptive samplers, packaged for the controller."""
import numpy as np

from . import engines
from .adapt_nsrwm import AdaptParam, nsrwm_advance
from .controller import (
    CEMETERY,
    ConfigurationError,
    MixtureCoverage,
    NsrwmCoverage,
    RunTrace,
    StepsizeSchedule,
    reinit_map,
)
from .kernels import ImhKernel, MixtureProposal, Safeguard, StepOutcome, imh_step_core, srwm_step_core
from .mathcore import chol_lower
from .mixture_em import OK, MixtureSuffStats, MixtureXi, em_advance, log_weights_core, mstep, mstep_core
from .target import TargetModel


def _trace(out, cadence, meta=None) -> RunTrace:
    xs, acc, las, kap, nus, steps, snaps, final = out[:8]
    n = xs.shape[0]
    return RunTrace(xs, acc, las, kap, nus, steps, np.arange(cadence, n + 1, cadence),
                    snaps, final, meta or {})


class NsrwmAlgorithm:
    """Random-walk Metropolis whose increment covariance ``lam * Gamma`` tracks
    the running mean and covariance of the chain.

    Args:
        target: Target density.
        mu0, gamma0: Reset parameter (must lie in the first truncation set).
        x0: Reset state; defaults to ``mu0``.
        lam: Increment scaling; defaults to ``2.38**2 / dim``.
        coverage: Truncation sets; defaults to :meth:`NsrwmCoverage.default_for`.
    """

    name = "nsrwm"

    def __init__(self, target: TargetModel, mu0=None, gamma0=None, x0=None, lam=None,
                 coverage: NsrwmCoverage | None = None):
        d = target.dim
        mu0 = np.zeros(d) if mu0 is None else mu0
        gamma0 = np.eye(d) if gamma0 is None else gamma0
        self.target = target
        self.theta0 = AdaptParam(mu0, gamma0)
        x0 = self.theta0.mu if x0 is None else x0
        self.x0 = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
        self.lam = 2.38 ** 2 / d if lam is None else float(lam)
        if self.lam <= 0.0:
            raise ConfigurationError("lambda must be positive")
        self.coverage = coverage or NsrwmCoverage.default_for(self.theta0.mu, self.theta0.gamma)
        self.reset = reinit_map(self.coverage, (self.x0, self.theta0))

    @property
    def dim(self) -> int:
        return self.target.dim

    @property
    def theta_size(self) -> int:
        return self.dim + self.dim ** 2

    def flatten(self, theta: AdaptParam) -> np.ndarray:
        return theta.flatten()

    def unflatten(self, v) -> AdaptParam:
        return AdaptParam.unflatten(v, self.dim)

    def draw(self, theta: AdaptParam, x, rng) -> StepOutcome:
        L, _ = chol_lower(self.lam * theta.gamma)
        t = self.target
        new, prop, acc, la = srwm_step_core(rng, x, L, t.log_weights, t.means, t.chols)
        return StepOutcome(new, prop, bool(acc), float(la))

    def advance(self, theta: AdaptParam, step: float, x):
        mu, g = nsrwm_advance(theta.mu, theta.gamma, step, x)
        if not (np.isfinite(mu).all() and np.isfinite(g).all()):
            return CEMETERY
        return AdaptParam(mu, g)

    def compiled_run(self, schedule: StepsizeSchedule, steps: int, rng, cadence: int) -> RunTrace:
        t, c = self.target, self.coverage
        out = engines.nsrwm_loop(rng, steps, cadence, self.x0, self.theta0.mu, self.theta0.gamma,
                                 self.lam, t.log_weights, t.means, t.chols,
                                 schedule.c0, schedule.alpha, c.m0, c.eps0, c.m1)
        return _trace(out, cadence)


class EmImhAlgorithm:
    """Independence sampler with proposal ``(1 - iota) q_xi + iota * safeguard``,
    ``xi`` fitted to the chain by online EM on sufficient statistics.

    Args:
        target: Target density.
        xi0: Initial mixture; its population statistics are the reset parameter.
        iota: Safeguard weight in (0, 1).
        safeguard: Fixed component; defaults to a Gaussian centred at the mean
            of ``xi0`` with 25 times its covariance.
        weight_floor, cov_floor: M-step floors; default ``1e-3 / m`` and
            ``1e-4 * tr(cov(xi0)) / dim``.
        x0: Reset state; defaults to the mean of ``xi0``.
    """

    name = "em_imh"

    def __init__(self, target: TargetModel, xi0: MixtureXi, iota: float = 0.1,
                 safeguard: Safeguard | None = None, weight_floor=None, cov_floor=None,
                 x0=None, coverage: MixtureCoverage | None = None):
        if not 0.0 < iota < 1.0:
            raise ConfigurationError("iota out of (0,1)")
        if xi0.dim != target.dim:
            raise ConfigurationError("initial mixture dimension differs from target")
        self.target = target
        self.iota = float(iota)
        mean0, cov0 = xi0.moments()
        self.safeguard = safeguard or Safeguard.gaussian(mean0, 25.0 * cov0)
        m = xi0.n_components
        self.weight_floor = 1e-3 / m if weight_floor is None else float(weight_floor)
        self.cov_floor = (1e-4 * np.trace(cov0) / target.dim if cov_floor is None
                          else float(cov_floor))
        self.theta0 = MixtureSuffStats.of_mixture(xi0)
        x0 = mean0 if x0 is None else x0
        self.x0 = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
        self.coverage = coverage or MixtureCoverage.default_for(xi0)
        self.reset = reinit_map(self.coverage, (self.x0, self.theta0))

    @property
    def dim(self) -> int:
        return self.target.dim

    @property
    def n_components(self) -> int:
        return self.theta0.n_components

    @property
    def theta_size(self) -> int:
        m, d = self.n_components, self.dim
        return m + m * d + m * d * d

    def flatten(self, theta: MixtureSuffStats) -> np.ndarray:
        return theta.flatten()

    def unflatten(self, v) -> MixtureSuffStats:
        return MixtureSuffStats.unflatten(v, self.n_components, self.dim)

    def xi_of(self, theta: MixtureSuffStats) -> MixtureXi:
        return mstep(theta, self.weight_floor, self.cov_floor)

    def proposal_of(self, theta: MixtureSuffStats) -> MixtureProposal:
        return MixtureProposal(self.xi_of(theta), self.safeguard, self.iota)

    def kernel_of(self, theta: MixtureSuffStats) -> ImhKernel:
        return ImhKernel(self.target, self.proposal_of(theta))

    def draw(self, theta: MixtureSuffStats, x, rng) -> StepOutcome:
        w, means, _, chols, _, _ = mstep_core(theta.s0, theta.s1, theta.s2,
                                              self.weight_floor, self.cov_floor)
        t = self.target
        new, prop, acc, la = imh_step_core(rng, x, t.log_weights, t.means, t.chols, self.iota,
                                           w, log_weights_core(w), means, chols, *self.safeguard.args())
        return StepOutcome(new, prop, bool(acc), float(la))

    def advance(self, theta: MixtureSuffStats, step: float, x):
        s0, s1, s2, status = em_advance(theta.s0, theta.s1, theta.s2, step, x,
                                        self.weight_floor, self.cov_floor)
        if status != OK:
            return CEMETERY
        out = MixtureSuffStats(s0, s1, s2)
        if not np.isfinite(out.flatten()).all():
            return CEMETERY
        return out

    def compiled_run(self, schedule: StepsizeSchedule, steps: int, rng, cadence: int) -> RunTrace:
        t, c, th = self.target, self.coverage, self.theta0
        out = engines.emimh_loop(rng, steps, cadence, self.x0, th.s0, th.s1, th.s2,
                                 t.log_weights, t.means, t.chols, self.iota,
                                 *self.safeguard.args(), self.weight_floor, self.cov_floor,
                                 schedule.c0, schedule.alpha, c.m0, c.eps0, c.m1, c.f0)
        return _trace(out, cadence, {"floored_steps": int(out[8])})
