"""Adaptive chain with reinitialization on random truncation sets.

The chain state is ``(x, theta, kappa, nu)``: ``kappa`` indexes the active
truncation set and also shifts the stepsize sequence, ``nu`` counts steps
since the last reinitialization. One transition from ``(x, theta, kappa, nu)``:

1. if ``nu == 0``, replace ``(x, theta)`` by the reset pair;
2. draw ``x'`` from ``P_theta(x, .)``;
3. ``theta' = theta + g * H(theta, x')`` with ``g = c0 / (kappa + nu + 1)^alpha``;
   a degenerate field or non-finite result maps ``theta'`` to the cemetery;
4. if ``theta'`` lies in the ``kappa``-th truncation set, emit
   ``(x', theta', kappa, nu + 1)``; otherwise emit the reset pair with
   ``(kappa + 1, 0)``. The rejected ``theta'`` only appears in the record.

The algorithm plugged into :func:`transition` supplies ``reset``,
``coverage``, ``draw(theta, x, rng)``, ``advance(theta, step, x)`` (returns
``None`` for the cemetery) and ``flatten(theta)``.
"""
from dataclasses import dataclass, field
from typing import Any

import numba
import numpy as np

from .mathcore import sym_eig_bounds

CEMETERY = None


class ConfigurationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# stepsizes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepsizeSchedule:
    """``gamma_k = c0 / (k + shift)^alpha`` with ``alpha`` in (1/2, 1]."""

    c0: float = 0.5
    alpha: float = 0.7
    shift: int = 0

    def __post_init__(self):
        if not self.c0 > 0.0:
            raise ConfigurationError("c0 must be positive")
        if not 0.5 < self.alpha <= 1.0:
            raise ConfigurationError(
                "alpha must lie in (1/2, 1]: otherwise sum(gamma_k^2 + k^-1/2 gamma_k) diverges"
                if self.alpha <= 0.5 else
                "alpha must lie in (1/2, 1]: otherwise sum(gamma_k) converges")
        if self.shift < 0:
            raise ConfigurationError("shift must be nonnegative")

    def shifted(self, l: int) -> "StepsizeSchedule":
        return StepsizeSchedule(self.c0, self.alpha, self.shift + l)

    def effective(self, kappa: int, nu: int) -> float:
        """Stepsize of the transition leaving a state with counters ``(kappa, nu)``."""
        return gamma_at(self.shifted(kappa), nu + 1)


@numba.njit(cache=True)
def stepsize_core(c0, alpha, k):
    """``c0 / k^alpha``; compiled so every loop rounds identically."""
    return c0 / float(k) ** alpha


def gamma_at(s: StepsizeSchedule, k: int) -> float:
    if k < 1:
        raise ValueError("stepsize index starts at 1")
    return float(stepsize_core(float(s.c0), float(s.alpha), int(k + s.shift)))


# ---------------------------------------------------------------------------
# truncation sets
# ---------------------------------------------------------------------------

@numba.njit(cache=True)
def nsrwm_contains_core(mu, gamma, q, m0, eps0, m1):
    scale = 2.0 ** q
    for v in mu:
        if not np.isfinite(v):
            return False
    for v in gamma.ravel():
        if not np.isfinite(v):
            return False
    if np.sqrt((mu * mu).sum()) > m0 * scale:
        return False
    lo, hi = sym_eig_bounds(gamma)
    return lo >= eps0 / scale and hi <= m1 * scale


@numba.njit(cache=True)
def mixture_contains_core(s0, s1, s2, q, m0, eps0, m1, f0):
    scale = 2.0 ** q
    m, d = s1.shape
    for j in range(m):
        if not (s0[j] >= f0 / scale):
            return False
        mean = s1[j] / s0[j]
        c = s2[j] / s0[j]
        for a in range(d):
            for b in range(d):
                c[a, b] -= mean[a] * mean[b]
        for v in c.ravel():
            if not np.isfinite(v):
                return False
        if np.sqrt((mean * mean).sum()) > m0 * scale:
            return False
        lo, hi = sym_eig_bounds(0.5 * (c + c.T))
        if lo < eps0 / scale or hi > m1 * scale:
            return False
    return True


@dataclass(frozen=True)
class NsrwmCoverage:
    """``K_q = {|mu| <= M0 2^q, eps0 2^-q <= eig(Gamma) <= M1 2^q}``."""

    m0: float
    eps0: float
    m1: float

    @classmethod
    def default_for(cls, mu0, gamma0) -> "NsrwmCoverage":
        lo, hi = np.linalg.eigvalsh(np.asarray(gamma0, dtype=float))[[0, -1]]
        return cls(10.0 * (1.0 + float(np.linalg.norm(mu0))), 1e-2 * lo, 100.0 * hi)

    def contains(self, q: int, theta) -> bool:
        if theta is CEMETERY:
            return False
        return bool(nsrwm_contains_core(theta.mu, theta.gamma, q, self.m0, self.eps0, self.m1))


@dataclass(frozen=True)
class MixtureCoverage:
    """Per component: mass ``>= f0 2^-q``, ``|mean| <= M0 2^q``,
    covariance eigenvalues in ``[eps0 2^-q, M1 2^q]``."""

    m0: float
    eps0: float
    m1: float
    f0: float

    @classmethod
    def default_for(cls, xi) -> "MixtureCoverage":
        eig = np.array([np.linalg.eigvalsh(c)[[0, -1]] for c in xi.covs])
        return cls(10.0 * (1.0 + float(np.linalg.norm(xi.means, axis=1).max())),
                   1e-2 * eig[:, 0].min(), 100.0 * eig[:, 1].max(), 0.5 / xi.n_components)

    def contains(self, q: int, theta) -> bool:
        if theta is CEMETERY:
            return False
        return bool(mixture_contains_core(theta.s0, theta.s1, theta.s2, q,
                                          self.m0, self.eps0, self.m1, self.f0))


def coverage_contains(c, q: int, theta) -> bool:
    """Membership of ``theta`` in the ``q``-th set; the cemetery is in none."""
    return c.contains(q, theta)


def reinit_map(c, reset_point):
    """Constant reinitialization to ``reset_point = (x0, theta0)``.

    Raises:
        ConfigurationError: if ``theta0`` is outside the first truncation set.
    """
    x0, theta0 = reset_point
    if not c.contains(0, theta0):
        raise ConfigurationError("reset parameter must lie in the first truncation set")
    return np.array(x0, dtype=float), theta0


# ---------------------------------------------------------------------------
# chain
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChainState:
    x: np.ndarray
    theta: Any
    kappa: int = 0
    nu: int = 0


@dataclass(frozen=True)
class StepRecord:
    x: np.ndarray
    accepted: bool
    log_accept: float
    theta: np.ndarray  # tentative theta' (NaN for the cemetery)
    kappa: int
    nu: int
    step: float

    @property
    def reinit(self) -> bool:
        return self.nu == 0


def transition(z: ChainState, alg, schedule: StepsizeSchedule,
               rng: np.random.Generator) -> tuple[ChainState, StepRecord]:
    x, theta = (alg.reset if z.nu == 0 else (z.x, z.theta))
    step = schedule.effective(z.kappa, z.nu)
    out = alg.draw(theta, x, rng)
    theta_new = alg.advance(theta, step, out.new_x)
    if coverage_contains(alg.coverage, z.kappa, theta_new):
        nxt = ChainState(out.new_x, theta_new, z.kappa, z.nu + 1)
    else:
        x0, theta0 = alg.reset
        nxt = ChainState(x0, theta0, z.kappa + 1, 0)
    flat = (np.full(alg.theta_size, np.nan) if theta_new is CEMETERY
            else alg.flatten(theta_new))
    rec = StepRecord(out.new_x, out.accepted, out.log_accept_prob, flat,
                     nxt.kappa, nxt.nu, step)
    return nxt, rec


@dataclass
class RunTrace:
    """Per-step arrays for ``k = 1..n`` plus parameter snapshots.

    ``theta`` holds the tentative parameter of every step ``k`` with
    ``k % cadence == 0`` (rows of ``theta_steps``); at reinitialization steps
    that is the rejected value. ``final_theta`` is the flattened state
    parameter after the last step.
    """

    x: np.ndarray
    accepted: np.ndarray
    log_accept: np.ndarray
    kappa: np.ndarray
    nu: np.ndarray
    step: np.ndarray
    theta_steps: np.ndarray
    theta: np.ndarray
    final_theta: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def reinit(self) -> np.ndarray:
        return self.nu == 0

    @property
    def n_reinits(self) -> int:
        return int(self.reinit.sum())

    @property
    def final_kappa(self) -> int:
        return int(self.kappa[-1])

    @property
    def acceptance_rate(self) -> float:
        return float(self.accepted.mean())

    def summary(self) -> dict:
        return {"steps": self.n, "reinits": self.n_reinits, "final_kappa": self.final_kappa,
                "acceptance_rate": self.acceptance_rate,
                "final_theta": self.final_theta.tolist()}

    def equals(self, other: "RunTrace") -> bool:
        names = ("x", "accepted", "log_accept", "kappa", "nu", "step", "theta_steps",
                 "theta", "final_theta")
        return all(np.array_equal(getattr(self, a), getattr(other, a), equal_nan=True)
                   for a in names)


def make_rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def run(alg, schedule: StepsizeSchedule, steps: int, seed=0, cadence: int = 1,
        engine: str = "auto") -> RunTrace:
    """Runs ``steps`` transitions from ``(x0, theta0, 0, 0)``.

    Args:
        engine: ``"auto"`` uses the algorithm's compiled loop when it has one,
            ``"python"`` forces the reference :func:`transition` loop. Both
            give identical traces for the same seed.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if cadence < 1:
        raise ValueError("cadence must be >= 1")
    rng = make_rng(seed)
    if engine == "auto" and hasattr(alg, "compiled_run"):
        return alg.compiled_run(schedule, steps, rng, cadence)
    if engine not in ("auto", "python"):
        raise ValueError(f"unknown engine {engine!r}")
    d = alg.dim
    x = np.empty((steps, d))
    acc = np.empty(steps, dtype=bool)
    la = np.empty(steps)
    kappa = np.empty(steps, dtype=np.int64)
    nu = np.empty(steps, dtype=np.int64)
    gam = np.empty(steps)
    snap_k = np.arange(cadence, steps + 1, cadence)
    snaps = np.empty((snap_k.size, alg.theta_size))
    x0, theta0 = alg.reset
    z = ChainState(x0, theta0, 0, 0)
    for i in range(steps):
        z, rec = transition(z, alg, schedule, rng)
        x[i], acc[i], la[i] = rec.x, rec.accepted, rec.log_accept
        kappa[i], nu[i], gam[i] = rec.kappa, rec.nu, rec.step
        if (i + 1) % cadence == 0:
            snaps[(i + 1) // cadence - 1] = rec.theta
    return RunTrace(x, acc, la, kappa, nu, gam, snap_k, snaps, alg.flatten(z.theta))
