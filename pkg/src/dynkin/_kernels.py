"""Compiled kernels: counter-based noise, path games, chain value iteration.

The noise is a pure function of (seed, path, step, draw); parallel and serial
runs therefore consume identical randomness and every estimate is bitwise
reproducible regardless of scheduling.
"""
from __future__ import annotations

import numpy as np
from numba import njit, prange

_GOLD = np.uint64(0x9E3779B97F4A7C15)
_P1 = np.uint64(0xBF58476D1CE4E5B9)
_P2 = np.uint64(0x94D049BB133111EB)
_P3 = np.uint64(0xD6E8FEB86659FD93)

# Acklam's rational approximation to the standard normal quantile (~1e-9).
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


@njit(nogil=True, cache=True, inline="always")
def _sm(z):
    z = (z ^ (z >> np.uint64(30))) * _P1
    z = (z ^ (z >> np.uint64(27))) * _P2
    return z ^ (z >> np.uint64(31))


@njit(nogil=True, cache=True, inline="always")
def _path_key(seed, path):
    h = _sm(np.uint64(seed) + _GOLD)
    return _sm(h ^ (np.uint64(path) * _P3 + np.uint64(1)))


@njit(nogil=True, cache=True, inline="always")
def _u01(key, step, draw):
    h = _sm(key ^ (np.uint64(step) * _GOLD + np.uint64(11)))
    h = _sm(h + np.uint64(draw) * _P3)
    return (h >> np.uint64(11)) * 1.1102230246251565e-16 + 5.551115123125783e-17


@njit(nogil=True, cache=True, inline="always")
def _ndtri(p):
    if p < _P_LOW:
        q = np.sqrt(-2.0 * np.log(p))
        return -((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
                 / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    if p > 1.0 - _P_LOW:
        q = np.sqrt(-2.0 * np.log(1.0 - p))
        return ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
                / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    q = p - 0.5
    r = q * q
    return ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
            / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))


@njit(nogil=True, cache=True, inline="always")
def _normal(key, step, draw):
    return _ndtri(_u01(key, step, draw))


@njit(nogil=True, cache=True, inline="always")
def _pp_eval(breaks, coeffs, x):
    lo = 0
    hi = len(breaks)
    while lo < hi:
        mid = (lo + hi) // 2
        if x <= breaks[mid]:
            hi = mid
        else:
            lo = mid + 1
    c = coeffs[lo]
    return ((c[3] * x + c[2]) * x + c[1]) * x + c[0]


@njit(nogil=True, cache=True, inline="always")
def _in_targets(v, los, his):
    for j in range(len(los)):
        if los[j] <= v <= his[j]:
            return True
    return False


@njit(nogil=True, cache=True, inline="always")
def _horner(coeffs, x):
    out = 0.0
    for j in range(len(coeffs) - 1, -1, -1):
        out = out * x + coeffs[j]
    return out


@njit(nogil=True, parallel=True, cache=True)
def gbm_game_kernel(x0, beta, sigma, dt, n_steps, n_paths, seed,
                    b_llo, b_lhi, s_llo, s_lhi,
                    g1_breaks, g1_coeffs, g2_breaks, g2_coeffs,
                    antithetic,
                    out_low, out_high, out_resolved, out_tstop, out_who):
    """Play first-entry games along exact lognormal paths, in log space.

    Target intervals arrive as log-bounds. Tie (both enter at the same step)
    pays the lower payoff. Unresolved paths get the bracket [0, disc*g2(X_T)].
    """
    a = (beta - 0.5 * sigma * sigma) * dt
    b = sigma * np.sqrt(dt)
    lx0 = np.log(x0)
    for p in prange(n_paths):
        base = p // 2 if antithetic else p
        flip = antithetic and (p % 2 == 1)
        key = _path_key(seed, base)
        lx = lx0
        done = False
        for k in range(n_steps + 1):
            buyer = _in_targets(lx, b_llo, b_lhi)
            seller = _in_targets(lx, s_llo, s_lhi)
            if buyer or seller:
                x = np.exp(lx)
                disc = np.exp(-beta * (k * dt))
                if buyer:
                    pay = disc * _pp_eval(g1_breaks, g1_coeffs, x)
                    out_who[p] = 1
                else:
                    pay = disc * _pp_eval(g2_breaks, g2_coeffs, x)
                    out_who[p] = 2
                out_low[p] = pay
                out_high[p] = pay
                out_resolved[p] = 1
                out_tstop[p] = k * dt
                done = True
                break
            if k < n_steps:
                z = _normal(key, k, 0)
                if flip:
                    z = -z
                lx = lx + a + b * z
        if not done:
            x = np.exp(lx)
            disc = np.exp(-beta * (n_steps * dt))
            out_low[p] = 0.0
            out_high[p] = disc * _pp_eval(g2_breaks, g2_coeffs, x)
            out_resolved[p] = 0
            out_who[p] = 0
            out_tstop[p] = n_steps * dt


@njit(nogil=True, parallel=True, cache=True)
def euler_game_kernel(x0, beta, dt, n_steps, n_paths, seed,
                      drift_coeffs, vol_coeffs,
                      b_lo, b_hi, s_lo, s_hi,
                      g1_breaks, g1_coeffs, g2_breaks, g2_coeffs,
                      antithetic,
                      out_low, out_high, out_resolved, out_tstop, out_who,
                      out_guard):
    """Euler-Maruyama variant with a positivity guard (resample, then clamp)."""
    sqdt = np.sqrt(dt)
    for p in prange(n_paths):
        base = p // 2 if antithetic else p
        flip = antithetic and (p % 2 == 1)
        key = _path_key(seed, base)
        x = x0
        guards = 0
        done = False
        for k in range(n_steps + 1):
            buyer = _in_targets(x, b_lo, b_hi)
            seller = _in_targets(x, s_lo, s_hi)
            if buyer or seller:
                disc = np.exp(-beta * (k * dt))
                if buyer:
                    pay = disc * _pp_eval(g1_breaks, g1_coeffs, x)
                    out_who[p] = 1
                else:
                    pay = disc * _pp_eval(g2_breaks, g2_coeffs, x)
                    out_who[p] = 2
                out_low[p] = pay
                out_high[p] = pay
                out_resolved[p] = 1
                out_tstop[p] = k * dt
                done = True
                break
            if k < n_steps:
                mu = _horner(drift_coeffs, x)
                sg = _horner(vol_coeffs, x)
                xn = -1.0
                for attempt in range(100):
                    z = _normal(key, k, attempt)
                    if flip:
                        z = -z
                    xn = x + mu * dt + sg * sqdt * z
                    if xn > 0.0:
                        break
                if xn <= 0.0:
                    xn = x * 1e-6
                    guards += 1
                x = xn
        if not done:
            disc = np.exp(-beta * (n_steps * dt))
            out_low[p] = 0.0
            out_high[p] = disc * _pp_eval(g2_breaks, g2_coeffs, x)
            out_resolved[p] = 0
            out_who[p] = 0
            out_tstop[p] = n_steps * dt
        out_guard[p] = guards


@njit(nogil=True, parallel=True, cache=True)
def gbm_ladder_kernel(x0, beta, sigma, dt, ladder_steps, n_paths, seed,
                      t_llo, t_lhi,
                      out_x, out_disc):
    """State and discount at t_j ^ tau for tau = first entry into the targets.

    Feeds the stopped-process monotonicity probe: out_x[p, j] = X(t_j ^ tau),
    out_disc[p, j] = exp(-beta (t_j ^ tau)).
    """
    a = (beta - 0.5 * sigma * sigma) * dt
    b = sigma * np.sqrt(dt)
    lx0 = np.log(x0)
    n_steps = ladder_steps[len(ladder_steps) - 1]
    for p in prange(n_paths):
        key = _path_key(seed, p)
        lx = lx0
        stopped = False
        stop_x = 0.0
        stop_disc = 1.0
        j = 0
        for k in range(n_steps + 1):
            if not stopped and _in_targets(lx, t_llo, t_lhi):
                stopped = True
                stop_x = np.exp(lx)
                stop_disc = np.exp(-beta * (k * dt))
            while j < len(ladder_steps) and ladder_steps[j] == k:
                if stopped:
                    out_x[p, j] = stop_x
                    out_disc[p, j] = stop_disc
                else:
                    out_x[p, j] = np.exp(lx)
                    out_disc[p, j] = np.exp(-beta * (k * dt))
                j += 1
            if k < n_steps:
                z = _normal(key, k, 0)
                lx = lx + a + b * z


@njit(nogil=True, cache=True)
def chain_sweep_iteration(y, H1, H2, w_init, v_left, v_right, from_below,
                          max_sweeps):
    """Exhaustive projected value iteration w <- clamp(chord, H1, H2).

    Sweeps run in place with alternating direction; monotonicity is enforced
    in floating point (from below or from above), so the iteration reaches an
    exact stationary point in finitely many sweeps. Returns the sweep count
    (== max_sweeps means the budget was exhausted before stalling).
    """
    n = len(y)
    w = w_init.copy()
    w[0] = v_left
    w[-1] = v_right
    lam = np.empty(n)
    for i in range(1, n - 1):
        lam[i] = (y[i + 1] - y[i]) / (y[i + 1] - y[i - 1])
    forward = True
    for sweep in range(max_sweeps):
        delta = 0.0
        if forward:
            for i in range(1, n - 1):
                c = lam[i] * w[i - 1] + (1.0 - lam[i]) * w[i + 1]
                if c < H1[i]:
                    c = H1[i]
                elif c > H2[i]:
                    c = H2[i]
                if from_below:
                    if c < w[i]:
                        c = w[i]
                elif c > w[i]:
                    c = w[i]
                d = abs(c - w[i])
                if d > delta:
                    delta = d
                w[i] = c
        else:
            for i in range(n - 2, 0, -1):
                c = lam[i] * w[i - 1] + (1.0 - lam[i]) * w[i + 1]
                if c < H1[i]:
                    c = H1[i]
                elif c > H2[i]:
                    c = H2[i]
                if from_below:
                    if c < w[i]:
                        c = w[i]
                elif c > w[i]:
                    c = w[i]
                d = abs(c - w[i])
                if d > delta:
                    delta = d
                w[i] = c
        forward = not forward
        if delta == 0.0:
            return w, sweep + 1
    return w, max_sweeps


def warmup():
    """Trigger JIT compilation of every kernel on tiny inputs."""
    y = np.array([1.0, 2.0, 3.0])
    z = np.zeros(3)
    o = np.ones(3)
    chain_sweep_iteration(y, z, o, z, 0.0, 0.0, True, 4)
    br = np.empty(0, dtype=float)
    co = np.zeros((1, 4))
    e = np.empty(0, dtype=float)
    lo = np.full(1, -np.inf)
    hi = np.full(1, np.inf)
    outs = [np.zeros(2), np.zeros(2), np.zeros(2, dtype=np.int64),
            np.zeros(2), np.zeros(2, dtype=np.int64)]
    gbm_game_kernel(1.0, 0.05, 0.3, 0.5, 2, 2, 1, lo, hi, e, e,
                    br, co, br, co, False, *outs)
    euler_game_kernel(1.0, 0.05, 0.5, 2, 2, 1, np.array([0.0, 0.05]),
                      np.array([0.0, 0.3]), lo, hi, e, e, br, co, br, co,
                      False, *outs, np.zeros(2, dtype=np.int64))
    gbm_ladder_kernel(1.0, 0.05, 0.3, 0.5, np.array([0, 2], dtype=np.int64),
                      2, 1, e, e, np.zeros((2, 2)), np.zeros((2, 2)))
