"""Solve pipeline, result document, and file emission."""
from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .analysis import (SaddleVerdict, SmoothFitReport, StoppingRegions,
                       boundary_growth, classify_saddle, extract_regions,
                       generator_measure_sign, smooth_fit_check)
from .config import ProblemConfig
from .diffusion import make_model, solve_fundamental
from .envelope import (EnvelopeSolution, EnvelopeTolerances,
                       contact_tolerance, smallest_in_H)
from .errors import ConfigError, InvalidParameterError
from .grids import GridCurve, log_grid
from .payoffs import PayoffPair
from .simulate import Strategy, estimate_R, saddle_probe
from .transform import build_transform, transform_obstacles, untransform_value


@dataclass
class GameSolution:
    """Top-level result document for one solved game."""

    config: dict
    xgrid: np.ndarray
    V: GridCurve
    W: GridCurve
    envelope: EnvelopeSolution
    regions: StoppingRegions
    smooth_fit: SmoothFitReport
    measure_signs: tuple
    l0: object
    linf: object
    saddle: SaddleVerdict
    payoffs: PayoffPair
    fundamental: object
    obstacles: object
    truncation_warning: bool
    mc: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    # -- hooks used by the Monte Carlo probes ------------------------------
    def value(self, x):
        return self.V(x)

    def seller_strategy(self) -> Strategy:
        return self.regions.gamma_star_rule

    def buyer_strategy(self) -> Strategy:
        return self.regions.tau_star_rule

    @property
    def verdict(self) -> str:
        return "saddle" if self.saddle.is_saddle else self.saddle.verdict

    @property
    def bracket_gap(self) -> float:
        return self.envelope.bracket_gap

    def to_json_dict(self) -> dict:
        def trend(t):
            return {"value": _jf(t.value), "spread": _jf(t.spread), "tag": t.tag}

        doc = {
            "provenance": self.provenance,
            "grid": {"n_points": int(len(self.xgrid)),
                     "x_min": float(self.xgrid[0]), "x_max": float(self.xgrid[-1])},
            "value": {"x": [float(v) for v in self.xgrid],
                      "V": [float(v) for v in self.V.values],
                      "W": [float(v) for v in self.W.values]},
            "bracket_gap": _jf(self.envelope.bracket_gap),
            "converged": bool(self.envelope.converged),
            "iterations": int(self.envelope.iterations),
            "truncation_warning": bool(self.truncation_warning),
            "regions": {
                "E1": [[float(a), float(b)] for a, b in self.regions.E1],
                "E2": [[float(a), float(b)] for a, b in self.regions.E2],
                "isolated_nodes": [float(v) for v in self.regions.isolated_nodes],
            },
            "smooth_fit": [{
                "x0": _jf(p.x0), "obstacle": int(p.obstacle),
                "applicable": bool(p.applicable), "passed": bool(p.passed),
                "v_slope_left": _jf(p.v_slope_left), "v_slope_right": _jf(p.v_slope_right),
                "g_slope_left": _jf(p.g_slope_left), "g_slope_right": _jf(p.g_slope_right),
                "note": p.note,
            } for p in self.smooth_fit.points],
            "measure_signs": [{
                "payoff": name, "interval": [_jf(r.interval[0]), _jf(r.interval[1])],
                "verdict": r.verdict, "interior_min": _jf(r.interior_min),
                "interior_max": _jf(r.interior_max),
                "kink_jumps": {str(k): _jf(v) for k, v in r.kink_jumps.items()},
                "expected_region_empty": r.expected_region_empty,
            } for name, r in self.measure_signs],
            "growth": {"l0": trend(self.l0), "linf": trend(self.linf)},
            "saddle": {"verdict": self.saddle.verdict,
                       "reasons": list(self.saddle.reasons),
                       "integrability_42": self.saddle.integrability_42,
                       "truncation_note": self.saddle.truncation_note},
            "mc": self.mc,
        }
        return doc


def _jf(v):
    """JSON-safe float (inf/nan become strings, which json would reject)."""
    v = float(v)
    if math.isfinite(v):
        return v
    return "inf" if v > 0 else ("-inf" if v < 0 else "nan")


def _config_hash(resolved: dict) -> str:
    # output paths do not affect results, so they stay out of the hash
    core = {k: v for k, v in resolved.items() if k != "output"}
    blob = json.dumps(core, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def build_grid(cfg_grid: dict, payoffs: PayoffPair, extra=()):
    x_min, x_max = cfg_grid["x_min"], cfg_grid["x_max"]
    if x_min is None or x_max is None:
        raise ConfigError("grid.x_min and grid.x_max are required to solve")
    inserts = [k for k in payoffs.kinks if x_min < k < x_max]
    inserts += [p for p in extra if p is not None and x_min < p < x_max]
    x_ref = cfg_grid.get("x_ref")
    if x_ref is None:
        x_ref = 1.0 if x_min <= 1.0 <= x_max else math.sqrt(x_min * x_max)
    inserts.append(x_ref)
    return log_grid(x_min, x_max, int(cfg_grid["n_points"]), insert=inserts), float(x_ref)


def run_solve(config: ProblemConfig, emit: bool = True) -> GameSolution:
    """Execute diffusion -> transform -> envelope -> analysis and emit files."""
    r = config.resolved()
    payoffs = config.build_payoffs()
    model_cfg = r["model"]
    fam = model_cfg["family"]
    kwargs = {"beta": model_cfg["beta"],
              "integrability_42": bool(model_cfg.get("integrability_42", True))}
    if fam == "gbm":
        kwargs["sigma"] = model_cfg.get("sigma")
    else:
        if "vol_coeffs" in model_cfg:
            vc = model_cfg["vol_coeffs"]
            kwargs["vol_coeffs"] = vc if isinstance(vc, tuple) else (vc,)
        if "drift_coeffs" in model_cfg:
            dc = model_cfg["drift_coeffs"]
            kwargs["drift_coeffs"] = dc if isinstance(dc, tuple) else (dc,)
    model = make_model(fam, **kwargs)

    grid, x_ref = build_grid(r["grid"], payoffs)
    payoffs.check_on_grid(grid)
    fundamental = solve_fundamental(
        model, grid, x_ref=x_ref,
        force_numeric=bool(r["solve"].get("force_numeric_fundamental", False)))
    transform = build_transform(fundamental)
    obstacles = transform_obstacles(payoffs, transform, fundamental)
    tols = EnvelopeTolerances(tol_fix_rel=float(r["solve"]["tol_fix_rel"]))
    envelope = smallest_in_H(obstacles, tols, boundary=r["solve"].get("boundary", "natural"))
    V = untransform_value(envelope.W, transform, fundamental)

    regions = extract_regions(V, payoffs, tol_contact=None)
    fit = smooth_fit_check(V, payoffs, regions, fundamental)
    l0, linf = boundary_growth(payoffs, fundamental)
    saddle = classify_saddle(l0, linf, regions, model.integrability_42_declared,
                             domain=(grid[0], grid[-1]))
    signs = _measure_sign_suite(payoffs, model, grid)

    gap_threshold = float(r["solve"]["gap_threshold_rel"])
    scale = 1.0 + float(np.max(np.abs(obstacles.H2)))
    anchors_ok = all(
        getattr(info, "tag", "converged") == "converged"
        for info in (envelope.boundary_info.get("l0"),
                     envelope.boundary_info.get("tail_slope"))
        if info is not None)
    # an empty seller region with separated obstacles usually means the
    # contact set lies beyond the truncated domain
    g1v, g2v = payoffs.values_on(grid)
    separated = np.any(g2v > g1v + 1e-9 * (1.0 + np.abs(g2v)))
    warning = ((envelope.bracket_gap > gap_threshold * scale)
               or not anchors_ok
               or (separated and not regions.E2))

    solution = GameSolution(
        config=r, xgrid=grid, V=V, W=envelope.W, envelope=envelope,
        regions=regions, smooth_fit=fit, measure_signs=signs,
        l0=l0, linf=linf, saddle=saddle, payoffs=payoffs,
        fundamental=fundamental, obstacles=obstacles,
        truncation_warning=bool(warning),
        provenance={
            "package": "dynkin", "version": __version__,
            "config_hash": _config_hash(r),
            "numpy": np.__version__,
            "seed": r["mc"]["seed"],
        })
    if emit:
        emit_outputs(solution, r["output"])
    return solution


def _measure_sign_suite(payoffs, model, grid):
    """Generator sign reports on the maximal separation intervals."""
    g1v, g2v = payoffs.values_on(grid)
    sep = g2v > g1v + 1e-9 * (1.0 + np.abs(g2v))
    reports = []
    i = 0
    n = len(grid)
    while i < n:
        if sep[i]:
            j = i
            while j + 1 < n and sep[j + 1]:
                j += 1
            if j > i:
                interval = (float(grid[i]), float(grid[j]))
                reports.append(("g1", generator_measure_sign(
                    payoffs.g1, model, interval, other=payoffs.g2, which=1)))
                reports.append(("g2", generator_measure_sign(
                    payoffs.g2, model, interval, other=payoffs.g1, which=2)))
            i = j + 1
        else:
            i += 1
    return tuple(reports)


def run_simulate(config: ProblemConfig, solution: GameSolution) -> GameSolution:
    """Monte Carlo stage: value re-estimation and strategy probes."""
    r = config.resolved()
    mc = r["mc"]
    if not mc["enabled"]:
        solution.mc = {"enabled": False}
        return solution
    bad_horizon = mc["horizon"] is not None and mc["horizon"] < mc["dt"]
    if mc["n_paths"] < 100 or mc["dt"] <= 0 or bad_horizon:
        raise InvalidParameterError(
            f"invalid MC parameters: n_paths={mc['n_paths']}, dt={mc['dt']}, "
            f"horizon={mc['horizon']}")
    model = solution_model(solution, r)
    payoffs = solution.payoffs
    x0 = float(mc.get("x0") or math.sqrt(solution.xgrid[0] * solution.xgrid[-1]))
    seed = int(mc["seed"])
    dt = float(mc["dt"])
    horizon = mc["horizon"]
    horizon = float(horizon) if horizon else 10.0 / model.beta

    gamma = solution.seller_strategy()
    est = estimate_R(model, x0, Strategy.never(), gamma, payoffs, model.beta,
                     int(mc["n_paths"]), seed, dt, horizon,
                     antithetic=bool(mc.get("antithetic", False)))
    half = estimate_R(model, x0, Strategy.never(), gamma, payoffs, model.beta,
                      max(int(mc["n_paths"]) // 4, 100), seed + 7, dt / 2.0,
                      horizon)
    barriers = mc.get("probe_barriers") or ()
    if isinstance(barriers, (int, float)):
        barriers = (barriers,)
    probes = [(f"first-entry [{b}, inf)", Strategy.first_entry((float(b), math.inf)))
              for b in barriers]
    probes.append(("immediate", Strategy.immediate()))
    report = saddle_probe(solution, model, payoffs, probes,
                          {"x0": x0, "n_paths": min(int(mc["n_paths"]), 5000),
                           "dt": dt, "seed": seed, "horizon": horizon})
    solution.mc = {
        "enabled": True,
        "x0": x0, "seed": seed, "dt": dt, "horizon": horizon,
        "n_paths": int(mc["n_paths"]),
        "value_estimate": {
            "mean": est.mean, "stderr": est.stderr,
            "bracket": [est.bracket[0], est.bracket[1]],
            "horizon_unresolved": est.horizon_unresolved,
            "truncation_hits": est.truncation_hits,
        },
        "dt_halving": {"dt": dt / 2.0, "mean": half.mean, "stderr": half.stderr,
                       "shift_vs_base": half.mean - est.mean},
        "value_at_x0": float(solution.value(x0)),
        "buyer_probes": [{
            "label": p.label, "mean": p.estimate.mean, "stderr": p.estimate.stderr,
            "bound": p.bound, "ok": p.ok} for p in report.buyer_probes],
        "seller_probes": [{
            "label": p.label, "mean": p.estimate.mean, "stderr": p.estimate.stderr,
            "bound": p.bound, "ok": p.ok} for p in report.seller_probes],
        "submartingale_probe": report.submartingale,
        "violations": list(report.violations),
        "workers": _worker_count(),
    }
    return solution


def _worker_count() -> int:
    try:
        import numba
        return int(numba.get_num_threads())
    except Exception:
        return 1


def solution_model(solution: GameSolution, resolved: dict):
    model_cfg = resolved["model"]
    fam = model_cfg["family"]
    kwargs = {"beta": model_cfg["beta"],
              "integrability_42": bool(model_cfg.get("integrability_42", True))}
    if fam == "gbm":
        kwargs["sigma"] = model_cfg.get("sigma")
    else:
        if "vol_coeffs" in model_cfg:
            vc = model_cfg["vol_coeffs"]
            kwargs["vol_coeffs"] = vc if isinstance(vc, tuple) else (vc,)
        if "drift_coeffs" in model_cfg:
            dc = model_cfg["drift_coeffs"]
            kwargs["drift_coeffs"] = dc if isinstance(dc, tuple) else (dc,)
    return make_model(fam, **kwargs)


def _fmt_float(v: float) -> str:
    """Shortest decimal that round-trips to the same binary64 value."""
    s = repr(float(v))
    return s


def emit_csv(solution: GameSolution, path: str):
    x = solution.xgrid
    g1, g2 = solution.payoffs.values_on(x)
    V = solution.V.values
    W = solution.W.values
    in1 = np.asarray([1 if solution.regions.in_E1(v) else 0 for v in x])
    in2 = np.asarray([1 if solution.regions.in_E2(v) else 0 for v in x])
    lines = ["x,g1,g2,V,W_of_Fx,in_E1,in_E2"]
    for i in range(len(x)):
        lines.append(",".join([
            _fmt_float(x[i]), _fmt_float(g1[i]), _fmt_float(g2[i]),
            _fmt_float(V[i]), _fmt_float(W[i]), str(in1[i]), str(in2[i])]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def emit_json(solution: GameSolution, path: str):
    doc = solution.to_json_dict()
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(blob + "\n")


def emit_outputs(solution: GameSolution, output_cfg: dict):
    """Write CSV/JSON/plot-data files named in the output section."""
    outdir = output_cfg.get("dir") or "."
    os.makedirs(outdir, exist_ok=True)
    wrote = {}
    if output_cfg.get("csv"):
        p = os.path.join(outdir, output_cfg["csv"])
        emit_csv(solution, p)
        wrote["csv"] = p
    if output_cfg.get("json"):
        p = os.path.join(outdir, output_cfg["json"])
        emit_json(solution, p)
        wrote["json"] = p
    if output_cfg.get("plot_data"):
        p = os.path.join(outdir, output_cfg["plot_data"])
        emit_csv(solution, p)
        wrote["plot_data"] = p
    return wrote


# ---------------------------------------------------------------------------
# self-check suite


def self_check(solution: GameSolution) -> list:
    """Run the module-level invariants against a produced solution.

    Returns a list of violation strings (empty when clean).
    """
    out = []
    x = solution.xgrid
    fund = solution.fundamental
    obs = solution.obstacles
    env = solution.envelope
    V = solution.V.values
    W = solution.W.values
    g1, g2 = solution.payoffs.values_on(x)

    if np.any(fund.psi <= 0) or np.any(fund.phi <= 0):
        out.append("fundamental pair not strictly positive")
    if not np.all(np.diff(fund.psi) > 0):
        out.append("psi not strictly increasing")
    if not np.all(np.diff(fund.phi) < 0):
        out.append("phi not strictly decreasing")
    if not np.all(np.diff(fund.F) > 0):
        out.append("F not strictly increasing")

    xr = fund.grid
    rt = np.interp(obs.back_map.F(xr), obs.back_map.ygrid, obs.back_map.xgrid)
    if np.max(np.abs(rt - xr) / xr) > 1e-12:
        out.append("transform round trip failed at grid nodes")

    scale = 1.0 + np.maximum(np.abs(g2), np.abs(V))
    if np.any(V < g1 - 1e-7 * scale) or np.any(V > g2 + 1e-7 * scale):
        out.append("sandwich violation: V outside [g1, g2]")

    wl = env.W_low.values
    wh = env.W_high.values
    if np.any(wl > wh + 1e-9 * (1.0 + np.abs(wh))):
        out.append("bracket ordering violated (W_low > W_high)")
    if env.bracket_gap < 0:
        out.append("negative bracket gap")

    y = obs.ygrid
    tolc = contact_tolerance(obs.H2, env.tol_fix)
    lam = (y[2:] - y[1:-1]) / (y[2:] - y[:-2])
    chord = lam * W[:-2] + (1.0 - lam) * W[2:]
    free_of_h2 = obs.H2[1:-1] - W[1:-1] > tolc[1:-1]
    free_of_h1 = W[1:-1] - obs.H1[1:-1] > tolc[1:-1]
    slack = 10.0 * env.tol_fix + 1e-12 * (1.0 + np.abs(W[1:-1]))
    bad_concave = free_of_h2 & (W[1:-1] < chord - slack)
    if np.any(bad_concave):
        out.append(f"discrete concavity violated at {int(np.sum(bad_concave))} nodes")
    bad_convex = free_of_h1 & (W[1:-1] > chord + slack)
    if np.any(bad_convex):
        out.append(f"discrete convexity violated at {int(np.sum(bad_convex))} nodes")

    for a, b in solution.regions.E1:
        m = (x >= a) & (x <= b)
        sc = 1.0 + np.abs(g1[m])
        if np.any(np.abs(V[m] - g1[m]) > 1e-6 * sc):
            out.append(f"E1 interval [{a}, {b}] not in contact with g1")
    for a, b in solution.regions.E2:
        m = (x >= a) & (x <= b)
        sc = 1.0 + np.abs(g2[m])
        if np.any(np.abs(V[m] - g2[m]) > 1e-6 * sc):
            out.append(f"E2 interval [{a}, {b}] not in contact with g2")
    for a, b in solution.regions.E1:
        for c, d in solution.regions.E2:
            lo, hi = max(a, c), min(b, d)
            if lo <= hi:
                m = (x >= lo) & (x <= hi)
                sc = 1.0 + np.abs(g2[m])
                if np.any(g2[m] - g1[m] > 1e-6 * sc):
                    out.append("E1 and E2 overlap where g1 < g2")

    if not solution.smooth_fit.passed:
        out.append("smooth-fit report contains failures")
    for name, rep in solution.measure_signs:
        if not rep.consistent():
            out.append(f"measure-sign verdict inconsistent for {name} on {rep.interval}")
        if rep.expected_region_empty == "E1":
            lo, hi = rep.interval
            for a, b in solution.regions.E1:
                if max(a, lo) < min(b, hi) and (a > lo and b < hi):
                    out.append(f"E1 meets ({lo}, {hi}) despite nonzero-nonnegative verdict")
        if rep.expected_region_empty == "E2":
            lo, hi = rep.interval
            for a, b in solution.regions.E2:
                if max(a, lo) < min(b, hi) and (a > lo and b < hi):
                    out.append(f"E2 meets ({lo}, {hi}) despite nonzero-nonpositive verdict")
    return out
