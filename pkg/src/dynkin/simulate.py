"""Monte Carlo verification layer and the discrete-chain oracle.

Paths are generated from counter-based noise (a pure function of seed, path
index and step), so parallel chunking, worker count, and replay all produce
bitwise-identical results. The game estimator plays first-entry strategies
along discrete paths; ties pay the lower payoff, in line with the game's
payoff convention, and unstopped paths resolve to the bracket
[0, e^{-beta T} g2(X_T)].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .diffusion import DiffusionModel
from .errors import (InconsistentObstaclesError, InvalidParameterError,
                     OracleMismatchError, ProbeViolationError)
from .grids import GridCurve
from .payoffs import PayoffPair

_U64 = np.uint64
_GOLD = _U64(0x9E3779B97F4A7C15)
_P1 = _U64(0xBF58476D1CE4E5B9)
_P2 = _U64(0x94D049BB133111EB)
_P3 = _U64(0xD6E8FEB86659FD93)


def _sm_np(z):
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _U64(30))) * _P1
        z = (z ^ (z >> _U64(27))) * _P2
        return z ^ (z >> _U64(31))


def _u01_np(seed, path, steps, draw=0):
    with np.errstate(over="ignore"):
        key = _sm_np(_sm_np(_U64(seed) + _GOLD) ^ (_U64(path) * _P3 + _U64(1)))
        h = _sm_np(key ^ (steps.astype(np.uint64) * _GOLD + _U64(11)))
        h = _sm_np(h + _U64(draw) * _P3)
    return (h >> _U64(11)) * 1.1102230246251565e-16 + 5.551115123125783e-17


def _ndtri_np(p):
    p = np.asarray(p, dtype=float)
    out = np.empty_like(p)
    lo = p < _kernels._P_LOW
    hi = p > 1.0 - _kernels._P_LOW
    mid = ~(lo | hi)
    A, B, C, D = _kernels._A, _kernels._B, _kernels._C, _kernels._D
    if np.any(mid):
        q = p[mid] - 0.5
        r = q * q
        out[mid] = ((((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
                    / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0))
    for mask, sign, pp in ((lo, -1.0, p), (hi, 1.0, 1.0 - p)):
        if np.any(mask):
            q = np.sqrt(-2.0 * np.log(pp[mask]))
            out[mask] = sign * ((((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
                                / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0))
    return out


def path_normals(seed: int, path_index: int, n_steps: int) -> np.ndarray:
    """The exact normal draws the compiled kernels consume for one path."""
    steps = np.arange(n_steps, dtype=np.uint64)
    return _ndtri_np(_u01_np(seed, path_index, steps))


@dataclass(frozen=True)
class Strategy:
    """A stopping rule: never, immediate, or first entry into target intervals."""

    kind: str
    target: tuple = ()

    def __post_init__(self):
        if self.kind not in ("never", "immediate", "first-entry"):
            raise InvalidParameterError(f"unknown strategy kind {self.kind!r}")
        if self.kind == "first-entry":
            if not self.target:
                raise InvalidParameterError("first-entry needs a nonempty target list")
            ts = sorted(tuple(map(float, t)) for t in self.target)
            for (a, b) in ts:
                if not a <= b:
                    raise InvalidParameterError(f"empty target interval ({a}, {b})")
            for (_, b), (a2, _) in zip(ts[:-1], ts[1:]):
                if a2 <= b:
                    raise InvalidParameterError("target intervals must be disjoint")
            object.__setattr__(self, "target", tuple(ts))

    def intervals(self):
        if self.kind == "never":
            return np.empty(0), np.empty(0)
        if self.kind == "immediate":
            return np.asarray([-math.inf]), np.asarray([math.inf])
        lo = np.asarray([t[0] for t in self.target])
        hi = np.asarray([t[1] for t in self.target])
        return lo, hi

    def log_intervals(self):
        lo, hi = self.intervals()
        with np.errstate(divide="ignore"):
            return np.log(np.maximum(lo, 1e-300)), np.log(np.maximum(hi, 1e-300))

    def hits(self, x: float) -> bool:
        lo, hi = self.intervals()
        return bool(np.any((lo <= x) & (x <= hi)))

    @classmethod
    def never(cls):
        return cls("never")

    @classmethod
    def immediate(cls):
        return cls("immediate")

    @classmethod
    def first_entry(cls, *intervals):
        return cls("first-entry", tuple(intervals))


@dataclass(frozen=True)
class GameEstimate:
    mean: float
    stderr: float
    n_paths: int
    seed: int
    truncation_hits: int
    bracket: tuple
    horizon_unresolved: int = 0
    dt: float = 0.0
    horizon: float = 0.0

    def __post_init__(self):
        if self.stderr < 0:
            raise InvalidParameterError("stderr must be nonnegative")


@dataclass(frozen=True)
class GamePayoff:
    low: float
    high: float
    resolved: bool
    t_stop: float
    stopper: int  # 0 unresolved, 1 buyer, 2 seller


@dataclass(frozen=True)
class ChainProblem:
    """Discrete double-obstacle game on a chain of nodes with pinned ends."""

    y: np.ndarray
    H1: np.ndarray
    H2: np.ndarray
    pin: object = "low"  # "low" | "high" | (v0, vn)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        H1 = np.asarray(self.H1, dtype=float)
        H2 = np.asarray(self.H2, dtype=float)
        if not np.all(np.diff(y) > 0):
            raise InvalidParameterError("chain nodes must be strictly increasing")
        if np.any(H1 < 0) or np.any(H1 > H2):
            raise InconsistentObstaclesError("need 0 <= H1 <= H2 nodewise")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "H1", H1)
        object.__setattr__(self, "H2", H2)

    def pin_values(self):
        if self.pin == "low":
            return float(self.H1[0]), float(self.H1[-1])
        if self.pin == "high":
            return float(self.H2[0]), float(self.H2[-1])
        v0, vn = self.pin
        return float(v0), float(vn)


def chain_dynkin_oracle(problem: ChainProblem, tol_meet: float = 1e-12) -> GridCurve:
    """Exhaustive projected value iteration, run to a floating-point stall.

    One run climbs from the lower obstacle, a second descends from the upper
    obstacle; the unique discrete fixed point lies between their stalls. The
    runs must meet within ``tol_meet`` (widened by an O(n * eps * scale) floor
    that covers rounding quantization on long free runs), otherwise
    OracleMismatchError is raised: a genuinely ambiguous problem shows a
    macroscopic split, never an ulp-scale one.
    """
    v0, vn = problem.pin_values()
    n = len(problem.y)
    cap = 60 * n * n + 20000
    up0 = problem.H1.copy()
    dn0 = problem.H2.copy()
    up, s1 = _kernels.chain_sweep_iteration(problem.y, problem.H1, problem.H2,
                                            up0, v0, vn, True, cap)
    dn, s2 = _kernels.chain_sweep_iteration(problem.y, problem.H1, problem.H2,
                                            dn0, v0, vn, False, cap)
    gap = float(np.max(np.abs(up - dn)))
    scale = 1.0 + float(np.max(np.abs(problem.H2)))
    quantization = 32.0 * n * np.finfo(float).eps * scale
    if gap > max(tol_meet, quantization):
        raise OracleMismatchError(
            f"upward and downward value iterations disagree by {gap:.3e} "
            f"(> {max(tol_meet, quantization):.3e}); the discrete problem "
            "is numerically ambiguous")
    return GridCurve(problem.y, 0.5 * (up + dn))


# ---------------------------------------------------------------------------
# path simulation


def simulate_path(model: DiffusionModel, x0: float, dt: float, horizon: float,
                  rng_seed: int, path_index: int = 0):
    """One discrete path (times, states); exact lognormal steps for gbm.

    Deterministic in (seed, path_index); the batched estimators consume the
    same noise stream, so a path replayed here reproduces their trajectories.
    """
    if not (x0 > 0 and dt > 0 and horizon >= dt):
        raise InvalidParameterError("need x0 > 0, dt > 0, horizon >= dt")
    n_steps = int(round(horizon / dt))
    t = np.arange(n_steps + 1) * dt
    z = path_normals(rng_seed, path_index, n_steps)
    if model.family_tag == "gbm":
        sigma = model.params["sigma"]
        a = (model.beta - 0.5 * sigma * sigma) * dt
        b = sigma * math.sqrt(dt)
        # accumulate exactly like the batched kernel so replays are bitwise equal
        lx = np.empty(n_steps + 1)
        lx[0] = math.log(x0)
        acc = lx[0]
        for k in range(n_steps):
            acc = acc + a + b * z[k]
            lx[k + 1] = acc
        return t, np.exp(lx)
    # Euler with positivity guard (resample the increment, then clamp)
    x = np.empty(n_steps + 1)
    x[0] = x0
    sqdt = math.sqrt(dt)
    for k in range(n_steps):
        mu = float(model.drift_spec(x[k]))
        sg = float(model.vol_spec(x[k]))
        xn = x[k] + mu * dt + sg * sqdt * z[k]
        attempt = 1
        while xn <= 0.0 and attempt < 100:
            u = _u01_np(rng_seed, path_index, np.asarray([k], dtype=np.uint64), attempt)
            xn = x[k] + mu * dt + sg * sqdt * float(_ndtri_np(u)[0])
            attempt += 1
        if xn <= 0.0:
            xn = x[k] * 1e-6
        x[k + 1] = xn
    return t, x


def play_game(path, buyer: Strategy, seller: Strategy, payoffs: PayoffPair,
              beta: float, horizon_policy: str = "bracket") -> GamePayoff:
    """Resolve first entries along a discrete path; ties pay the lower payoff."""
    if horizon_policy != "bracket":
        raise InvalidParameterError("only the 'bracket' horizon policy exists")
    t, x = path
    blo, bhi = buyer.intervals()
    slo, shi = seller.intervals()
    bmask = np.zeros(len(x), dtype=bool)
    smask = np.zeros(len(x), dtype=bool)
    for a, b in zip(blo, bhi):
        bmask |= (x >= a) & (x <= b)
    for a, b in zip(slo, shi):
        smask |= (x >= a) & (x <= b)
    tau = int(np.argmax(bmask)) if bmask.any() else len(x)
    gam = int(np.argmax(smask)) if smask.any() else len(x)
    if tau >= len(x) and gam >= len(x):
        disc = math.exp(-beta * t[-1])
        return GamePayoff(0.0, disc * float(payoffs.g2(x[-1])), False, float(t[-1]), 0)
    if tau <= gam:
        pay = math.exp(-beta * t[tau]) * float(payoffs.g1(x[tau]))
        return GamePayoff(pay, pay, True, float(t[tau]), 1)
    pay = math.exp(-beta * t[gam]) * float(payoffs.g2(x[gam]))
    return GamePayoff(pay, pay, True, float(t[gam]), 2)


def _pp_arrays(pp):
    breaks = np.asarray(pp.knots, dtype=float)
    coeffs = np.asarray(pp._coeffs, dtype=float)
    return breaks, coeffs


def estimate_R(model: DiffusionModel, x0: float, buyer: Strategy,
               seller: Strategy, payoffs: PayoffPair, beta: float,
               n_paths: int, seed: int, dt: float,
               horizon: float | None = None,
               antithetic: bool = False) -> GameEstimate:
    """Average the discounted game payoff over seeded independent paths."""
    if n_paths < 100:
        raise InvalidParameterError("need n_paths >= 100")
    if abs(beta - model.beta) > 1e-15 * (1 + abs(beta)):
        raise InvalidParameterError("beta disagrees with the model's discount rate")
    if horizon is None:
        horizon = 10.0 / beta
    n_steps = int(round(horizon / dt))
    g1b, g1c = _pp_arrays(payoffs.g1)
    g2b, g2c = _pp_arrays(payoffs.g2)
    low = np.zeros(n_paths)
    high = np.zeros(n_paths)
    resolved = np.zeros(n_paths, dtype=np.int64)
    tstop = np.zeros(n_paths)
    who = np.zeros(n_paths, dtype=np.int64)
    if model.family_tag == "gbm":
        b_llo, b_lhi = buyer.log_intervals()
        s_llo, s_lhi = seller.log_intervals()
        _kernels.gbm_game_kernel(x0, model.beta, model.params["sigma"], dt,
                                 n_steps, n_paths, seed,
                                 b_llo, b_lhi, s_llo, s_lhi,
                                 g1b, g1c, g2b, g2c, antithetic,
                                 low, high, resolved, tstop, who)
        guards = 0
    else:
        dc = np.asarray(model.params.get("drift_coeffs", ()), dtype=float)
        vc = np.asarray(model.params.get("vol_coeffs", ()), dtype=float)
        if len(dc) == 0 or len(vc) == 0:
            raise InvalidParameterError(
                "batched estimation needs polynomial drift/vol coefficients")
        blo, bhi = buyer.intervals()
        slo, shi = seller.intervals()
        guard = np.zeros(n_paths, dtype=np.int64)
        _kernels.euler_game_kernel(x0, model.beta, dt, n_steps, n_paths, seed,
                                   dc, vc, blo, bhi, slo, shi,
                                   g1b, g1c, g2b, g2c, antithetic,
                                   low, high, resolved, tstop, who, guard)
        guards = int(guard.sum())
    mean = float(np.mean(low))
    stderr = float(np.std(low, ddof=1) / math.sqrt(n_paths))
    return GameEstimate(mean, stderr, n_paths, seed, guards,
                        (mean, float(np.mean(high))),
                        int(n_paths - resolved.sum()), dt, horizon)


def discretization_tolerance(model: DiffusionModel, barrier: float, dt: float,
                             slope_bound: float = 1.0) -> float:
    """Barrier-overshoot allowance: first entries on a discrete path overshoot
    by O(sqrt(dt)), shifting the effective barrier by ~0.5826 sigma sqrt(dt)."""
    sg = float(model.vol_spec(barrier))
    return 0.5826 * sg * math.sqrt(dt) * slope_bound


@dataclass(frozen=True)
class ProbeResult:
    label: str
    estimate: GameEstimate
    bound: float
    ok: bool


@dataclass(frozen=True)
class SaddleProbeReport:
    value_at_x0: float
    buyer_probes: tuple
    seller_probes: tuple
    submartingale: dict
    violations: tuple

    @property
    def ok(self) -> bool:
        return not self.violations


def saddle_probe(solution, model: DiffusionModel, payoffs: PayoffPair,
                 probe_set, mc_params, *, raise_on_violation: bool = False):
    """Estimate R against probe strategies and check the value bounds.

    For every buyer probe tau: R(tau, gamma*) <= V(x0) + 3 stderr + tol_disc.
    When the verdict is a saddle, seller probes must satisfy the mirror bound
    from below against tau*. A ladder probe checks that the sample mean of
    e^{-beta (t ^ tau*)} V(X(t ^ tau*)) is nondecreasing within its CI.
    """
    x0 = float(mc_params.get("x0"))
    n_paths = int(mc_params.get("n_paths", 4000))
    dt = float(mc_params.get("dt", 1e-3))
    seed = int(mc_params.get("seed", 20060816))
    horizon = mc_params.get("horizon")
    beta = model.beta
    V0 = float(solution.value(x0))
    gamma_star = solution.seller_strategy()
    tau_star = solution.buyer_strategy()
    barrier_scale = max(abs(x0), 1.0)
    tol_disc = discretization_tolerance(model, barrier_scale, dt,
                                        mc_params.get("slope_bound", 2.0))

    buyer_probes = []
    violations = []
    for label, strat in probe_set:
        est = estimate_R(model, x0, strat, gamma_star, payoffs, beta,
                         n_paths, seed, dt, horizon)
        bound = V0 + 3.0 * est.stderr + tol_disc
        ok = est.mean <= bound
        buyer_probes.append(ProbeResult(label, est, bound, ok))
        if not ok:
            violations.append(f"buyer probe {label}: {est.mean:.6g} > {bound:.6g}")

    seller_probes = []
    if getattr(solution, "verdict", None) == "saddle":
        for label, strat in probe_set:
            est = estimate_R(model, x0, tau_star, strat, payoffs, beta,
                             n_paths, seed, dt, horizon)
            bound = V0 - 3.0 * est.stderr - tol_disc
            ok = est.mean >= bound
            seller_probes.append(ProbeResult(label, est, bound, ok))
            if not ok:
                violations.append(f"seller probe {label}: {est.mean:.6g} < {bound:.6g}")

    sub = submartingale_probe(solution, model, x0,
                              n_paths=min(n_paths, 20000), dt=dt, seed=seed + 1,
                              ladder=mc_params.get("ladder", (0.0, 1.0, 2.0, 5.0, 10.0, 20.0)),
                              tol_disc=tol_disc)
    if not sub["ok"]:
        violations.append("stopped-value monotonicity probe failed: " + str(sub["means"]))

    report = SaddleProbeReport(V0, tuple(buyer_probes), tuple(seller_probes),
                               sub, tuple(violations))
    if violations and raise_on_violation:
        raise ProbeViolationError("; ".join(violations))
    return report


def submartingale_probe(solution, model, x0, *, n_paths, dt, seed, ladder,
                        tol_disc):
    """Sample means of the tau*-stopped discounted value along a time ladder."""
    if model.family_tag != "gbm":
        return {"ok": True, "means": [], "stderr": [], "note": "gbm only"}
    tau_star = solution.buyer_strategy()
    t_llo, t_lhi = tau_star.log_intervals()
    steps = np.asarray(sorted({int(round(t / dt)) for t in ladder}), dtype=np.int64)
    out_x = np.zeros((n_paths, len(steps)))
    out_d = np.zeros((n_paths, len(steps)))
    _kernels.gbm_ladder_kernel(x0, model.beta, model.params["sigma"], dt,
                               steps, n_paths, seed, t_llo, t_lhi, out_x, out_d)
    vals = out_d * solution.value(out_x)
    means = vals.mean(axis=0)
    ses = vals.std(axis=0, ddof=1) / math.sqrt(n_paths)
    ok = True
    for j in range(len(means) - 1):
        if means[j + 1] < means[j] - 3.0 * (ses[j] + ses[j + 1]) - 0.1 * tol_disc:
            ok = False
    return {"ok": bool(ok), "means": [float(v) for v in means],
            "stderr": [float(s) for s in ses],
            "times": [float(s * dt) for s in steps]}
