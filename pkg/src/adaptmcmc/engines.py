"""Compiled chain loops.

Each loop is the reference :func:`adaptmcmc.controller.transition` inlined:
it calls the same compiled cores in the same order with the same
``Generator``, so its traces equal the Python loop's bit for bit (checked in
the test suite). The Python loop stays the reference; these only buy
speed. They release the GIL, so replicates can run on a thread pool.
"""
import numba
import numpy as np

from .adapt_nsrwm import nsrwm_advance
from .controller import mixture_contains_core, nsrwm_contains_core, stepsize_core
from .kernels import imh_step_core, srwm_step_core
from .mathcore import chol_lower
from .mixture_em import OK, em_advance, log_weights_core, mstep_core


@numba.njit(cache=True)
def _all_finite(v):
    for a in v:
        if not np.isfinite(a):
            return False
    return True


@numba.njit(cache=True, nogil=True)
def nsrwm_loop(rng, n, cadence, x0, mu0, gamma0, lam, t_logw, t_means, t_chols,
               c0, alpha, m0, eps0, m1):
    d = x0.shape[0]
    p = d + d * d
    xs = np.empty((n, d))
    acc = np.empty(n, dtype=np.bool_)
    las = np.empty(n)
    kap = np.empty(n, dtype=np.int64)
    nus = np.empty(n, dtype=np.int64)
    steps = np.empty(n)
    snaps = np.empty((n // cadence, p))
    flat = np.empty(p)
    x = x0.copy()
    mu = mu0.copy()
    gamma = gamma0.copy()
    kappa = 0
    nu = 0
    for i in range(n):
        if nu == 0:
            x = x0.copy()
            mu = mu0.copy()
            gamma = gamma0.copy()
        step = stepsize_core(c0, alpha, kappa + nu + 1)
        L, ok = chol_lower(lam * gamma)
        new_x, prop, accepted, la = srwm_step_core(rng, x, L, t_logw, t_means, t_chols)
        mu_new, gamma_new = nsrwm_advance(mu, gamma, step, new_x)
        flat[:d] = mu_new
        flat[d:] = gamma_new.ravel()
        alive = _all_finite(flat)
        if not alive:
            flat[:] = np.nan
        if alive and nsrwm_contains_core(mu_new, gamma_new, kappa, m0, eps0, m1):
            x = new_x
            mu = mu_new
            gamma = gamma_new
            nu += 1
        else:
            kappa += 1
            nu = 0
            x = x0.copy()
            mu = mu0.copy()
            gamma = gamma0.copy()
        xs[i] = new_x
        acc[i] = accepted
        las[i] = la
        kap[i] = kappa
        nus[i] = nu
        steps[i] = step
        if (i + 1) % cadence == 0:
            snaps[(i + 1) // cadence - 1] = flat
    final = np.empty(p)
    final[:d] = mu
    final[d:] = gamma.ravel()
    return xs, acc, las, kap, nus, steps, snaps, final


@numba.njit(cache=True, nogil=True)
def emimh_loop(rng, n, cadence, x0, s00, s10, s20, t_logw, t_means, t_chols,
               iota, s_kind, s_loc, s_chol, s_df, weight_floor, cov_floor,
               c0, alpha, m0, eps0, m1, f0):
    m, d = s10.shape
    p = m + m * d + m * d * d
    xs = np.empty((n, d))
    acc = np.empty(n, dtype=np.bool_)
    las = np.empty(n)
    kap = np.empty(n, dtype=np.int64)
    nus = np.empty(n, dtype=np.int64)
    steps = np.empty(n)
    snaps = np.empty((n // cadence, p))
    flat = np.empty(p)
    x = x0.copy()
    s0 = s00.copy()
    s1 = s10.copy()
    s2 = s20.copy()
    kappa = 0
    nu = 0
    floored_steps = 0
    for i in range(n):
        if nu == 0:
            x = x0.copy()
            s0 = s00.copy()
            s1 = s10.copy()
            s2 = s20.copy()
        step = stepsize_core(c0, alpha, kappa + nu + 1)
        w, means, covs, chols, status, floored = mstep_core(s0, s1, s2, weight_floor, cov_floor)
        if floored:
            floored_steps += 1
        new_x, prop, accepted, la = imh_step_core(
            rng, x, t_logw, t_means, t_chols, iota, w, log_weights_core(w), means, chols,
            s_kind, s_loc, s_chol, s_df)
        n0, n1, n2, st = em_advance(s0, s1, s2, step, new_x, weight_floor, cov_floor)
        flat[:m] = n0
        flat[m:m + m * d] = n1.ravel()
        flat[m + m * d:] = n2.ravel()
        alive = st == OK and _all_finite(flat)
        if not alive:
            flat[:] = np.nan
        if alive and mixture_contains_core(n0, n1, n2, kappa, m0, eps0, m1, f0):
            x = new_x
            s0 = n0
            s1 = n1
            s2 = n2
            nu += 1
        else:
            kappa += 1
            nu = 0
            x = x0.copy()
            s0 = s00.copy()
            s1 = s10.copy()
            s2 = s20.copy()
        xs[i] = new_x
        acc[i] = accepted
        las[i] = la
        kap[i] = kappa
        nus[i] = nu
        steps[i] = step
        if (i + 1) % cadence == 0:
            snaps[(i + 1) // cadence - 1] = flat
    final = np.empty(p)
    final[:m] = s0
    final[m:m + m * d] = s1.ravel()
    final[m + m * d:] = s2.ravel()
    return xs, acc, las, kap, nus, steps, snaps, final, floored_steps
