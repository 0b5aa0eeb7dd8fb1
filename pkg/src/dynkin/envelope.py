"""Double-obstacle envelope solver in transformed coordinates.

The reported curve W is the smallest function sandwiched between the
obstacles that is concave wherever it is strictly below the upper obstacle.
On a grid this is the unique fixed point of the projected chord operator

    T[h](y_i) = clamp(chord_i(h), H1(y_i), H2(y_i))

(chord_i = linear interpolation between the two neighbours), which is also
the KKT point of a strictly convex quadratic program, hence unique for given
boundary treatment. The solver runs a projected monotone sweep iteration
accelerated by exact straight-line fills on the currently-free runs; every
answer is certified by the fixed-point residual.

Boundary treatment encodes the natural boundaries: the value's limits
W(0+) = l0 and W(y)/y -> l_inf (trend-extrapolated from the lower obstacle)
enter as a virtual anchor node at y = 0 and a terminal ray slope. The two
returned brackets widen these anchors by the extrapolation uncertainty; a
small bracket gap certifies the domain truncation. Value-pinned boundaries
remain available for truncated-problem semantics and oracle comparisons.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (ConvergenceFailureError, InconsistentObstaclesError,
                     InvalidParameterError)
from .grids import GridCurve, edge_samples, trend_limit
from .transform import TransformedObstacles


@dataclass(frozen=True)
class EnvelopeTolerances:
    tol_fix_rel: float = 1e-12
    contact_floor: float = 1e-9
    max_rounds: int = 400
    sweeps_per_round: int = 4
    anchor_samples: int = 10


@dataclass(frozen=True)
class EnvelopeSolution:
    """Solved envelope with its truncation bracket and contact classification."""

    W_low: GridCurve
    W_high: GridCurve
    W: GridCurve            # the reported solution (= W_high)
    bracket_gap: float      # max over interior nodes of W_high - W_low
    iterations: int
    converged: bool
    tol_fix: float
    contact1: np.ndarray    # nodes where W sits on H1
    contact2: np.ndarray    # nodes where W sits on H2
    boundary_info: dict = field(default_factory=dict)
    iterates_low: tuple = field(default=(), repr=False)
    iterates_high: tuple = field(default=(), repr=False)


# ---------------------------------------------------------------------------
# core projected-chord machinery


def _chord_lam(y):
    """Weight of the left neighbour in the interior chord."""
    return (y[2:] - y[1:-1]) / (y[2:] - y[:-2])


def _boundary_left(w, y, H1, H2, rule):
    kind, val = rule
    if kind == "pin":
        return val
    # anchor: chord between the virtual node (0, a) and (y1, w1), clamped
    a = val
    c = a + (w[1] - a) * (y[0] / y[1])
    return min(max(c, H1[0]), H2[0])


def _boundary_right(w, y, H1, H2, rule):
    kind, val = rule
    if kind == "pin":
        return val
    c = w[-2] + val * (y[-1] - y[-2])
    return min(max(c, H1[-1]), H2[-1])


def _jacobi(w, y, H1, H2, lam, left, right):
    out = np.empty_like(w)
    chord = lam * w[:-2] + (1.0 - lam) * w[2:]
    out[1:-1] = np.minimum(np.maximum(chord, H1[1:-1]), H2[1:-1])
    out[0] = _boundary_left(w, y, H1, H2, left)
    out[-1] = _boundary_right(w, y, H1, H2, right)
    return out


def _sweep(w, y, H1, H2, lam, left, right):
    """One red-black projected sweep, in place (two vectorized half-updates)."""
    n = len(w)
    for start in (1, 2):
        idx = np.arange(start, n - 1, 2)
        if len(idx):
            chord = (lam[idx - 1] * w[idx - 1] + (1.0 - lam[idx - 1]) * w[idx + 1])
            w[idx] = np.minimum(np.maximum(chord, H1[idx]), H2[idx])
        w[0] = _boundary_left(w, y, H1, H2, left)
        w[-1] = _boundary_right(w, y, H1, H2, right)


def _active_pattern(w, y, H1, H2, lam, eps):
    """Primal-dual contact pattern: keep a node anchored only if its chord
    respects the sign condition of that obstacle (concave at lower contacts,
    convex at upper ones). Releasing by the dual test frees whole runs at
    once, which is what makes the line-fill acceleration effective."""
    chord = np.empty_like(w)
    chord[0] = w[0]
    chord[-1] = w[-1]
    chord[1:-1] = lam * w[:-2] + (1.0 - lam) * w[2:]
    low = (w - H1 <= eps) & (chord <= H1 + eps)
    high = (H2 - w <= eps) & (chord >= H2 - eps)
    return low, high


def _line_fill(y, H1, H2, left, right, low, high):
    """Exact Dirichlet fill of the free runs implied by a contact pattern."""
    anchored = (low | high).copy()
    vals = np.where(high, H2, H1)
    xs = [0.0] if left[0] == "anchor" else []
    vs = [left[1]] if left[0] == "anchor" else []
    ts = [0] if left[0] == "anchor" else []
    vv = vals.copy()
    if left[0] == "pin":
        anchored[0] = True
        vv[0] = left[1]
    if right[0] == "pin":
        anchored[-1] = True
        vv[-1] = right[1]
    idx = np.flatnonzero(anchored)
    xs = np.concatenate([np.asarray(xs, dtype=float), y[idx]])
    vs = np.concatenate([np.asarray(vs, dtype=float), vv[idx]])
    # anchor types: 0 pin/virtual, 1 lower contact, 2 upper contact, 3 pinch
    tp = np.where(low[idx] & high[idx], 3, np.where(high[idx], 2, 1))
    ts = np.concatenate([np.asarray(ts, dtype=int), tp]) if len(ts) else tp
    if len(xs) == 0:
        fill = np.zeros_like(y)
        if right[0] == "ray":
            fill = right[1] * (y - y[0])
        return np.minimum(np.maximum(fill, H1), H2)
    fill = np.interp(y, xs, vs)
    if right[0] == "ray":
        s = right[1]
        # The ray must leave its last contact without an illegal kink: exits
        # from an upper contact need slope increase (walk left while the
        # contact rises faster than the ray), exits from a lower contact need
        # slope decrease (walk left while it rises slower). A node-by-node
        # dual release would otherwise migrate the junction one node a round.
        j = len(xs) - 1
        while j >= 1:
            seg = (vs[j] - vs[j - 1]) / (xs[j] - xs[j - 1])
            t = ts[j]
            if t == 2 and seg > s:
                j -= 1
            elif t == 1 and seg < s:
                j -= 1
            else:
                break
        tail = y > xs[j]
        if np.any(tail):
            fill[tail] = vs[j] + s * (y[tail] - xs[j])
    return np.minimum(np.maximum(fill, H1), H2)


def _solve_one(y, H1, H2, left, right, tols: EnvelopeTolerances,
               plain_sweeps=False, record_iterates=False):
    n = len(y)
    lam = _chord_lam(y)
    tol_fix = tols.tol_fix_rel * (1.0 + float(np.max(np.abs(H2))))
    w = H1.copy()
    w[0] = _boundary_left(w, y, H1, H2, left)
    w[-1] = _boundary_right(w, y, H1, H2, right)
    eps_fill = max(10.0 * tol_fix, 1e-13 * (1.0 + float(np.max(np.abs(H2)))))
    trace = [w.copy()] if record_iterates else []
    iterations = 0
    sweeps = tols.sweeps_per_round
    r_prev = math.inf
    stagnant = 0
    converged = False
    first = True
    for _ in range(tols.max_rounds):
        for _ in range(sweeps):
            _sweep(w, y, H1, H2, lam, left, right)
            iterations += 1
            if record_iterates:
                trace.append(w.copy())
        r = float(np.max(np.abs(_jacobi(w, y, H1, H2, lam, left, right) - w)))
        if r <= tol_fix:
            converged = True
            break
        if not plain_sweeps:
            if first:
                # all-free proposal: the unconstrained solve clipped into the
                # box seeds the contact pattern globally
                none = np.zeros(n, dtype=bool)
                prop = _line_fill(y, H1, H2, left, right, none, none)
                first = False
            else:
                low, high = _active_pattern(w, y, H1, H2, lam, eps_fill)
                prop = _line_fill(y, H1, H2, left, right, low, high)
            # one extra primal-dual round on the proposal itself
            low2, high2 = _active_pattern(prop, y, H1, H2, lam, eps_fill)
            prop2 = _line_fill(y, H1, H2, left, right, low2, high2)
            iterations += 2
            for cand in (prop2, prop):
                rp = float(np.max(np.abs(_jacobi(cand, y, H1, H2, lam, left, right) - cand)))
                if rp < r:
                    if record_iterates:
                        trace.append(cand.copy())
                    w = cand.copy()
                    r = rp
                    break
            if r <= tol_fix:
                converged = True
                break
        if r >= 0.5 * r_prev:
            stagnant += 1
            if stagnant >= 3:
                sweeps = min(sweeps * 2, 512)
                stagnant = 0
        r_prev = r
    if not converged:
        raise ConvergenceFailureError(
            f"envelope iteration stalled at residual {r_prev:.3e} "
            f"(tol {tol_fix:.3e}); widen the domain or refine the grid")
    return w, iterations, tol_fix, trace


# ---------------------------------------------------------------------------
# boundary policies


def natural_anchors(y, H1, count=10):
    """Trend-extrapolated boundary data of the value curve.

    Left: W(0+) equals the limit of the lower obstacle toward 0.
    Right: the terminal slope of W equals the limit of H1(y)/y.
    Floors are proportional to the data so the anchors commute with joint
    rescaling of the obstacles (the value is normalization-invariant).
    """
    scale = max(float(np.max(np.abs(H1))), 1e-300)
    li = edge_samples(H1, "left", count)
    l0 = trend_limit(H1[li], scale=scale)
    ri = edge_samples(H1, "right", count)
    ratios = H1[ri] / y[ri]
    slope = trend_limit(ratios, scale=max(float(np.max(np.abs(ratios))), 1e-300))
    return l0, slope


def _bracket_rules(y, H1, H2, boundary, tols):
    """Return ((left_low, right_low), (left_high, right_high), info)."""
    if boundary == "natural":
        l0, sl = natural_anchors(y, H1, tols.anchor_samples)
        info = {"policy": "natural", "l0": l0, "tail_slope": sl}
        if l0.tag == "converged" and l0.finite:
            left_lo = ("anchor", max(0.0, l0.value - l0.spread))
            left_hi = ("anchor", l0.value + l0.spread)
        else:
            left_lo = ("pin", float(H1[0]))
            left_hi = ("pin", float(H2[0]))
        if sl.tag == "converged" and sl.finite:
            right_lo = ("ray", max(0.0, sl.value - sl.spread))
            right_hi = ("ray", sl.value + sl.spread)
        else:
            right_lo = ("pin", float(H1[-1]))
            right_hi = ("pin", float(H2[-1]))
        return (left_lo, right_lo), (left_hi, right_hi), info
    if boundary == "pins":
        info = {"policy": "pins"}
        return ((("pin", float(H1[0])), ("pin", float(H1[-1]))),
                (("pin", float(H2[0])), ("pin", float(H2[-1]))), info)
    if isinstance(boundary, tuple) and len(boundary) == 2:
        v0, vn = float(boundary[0]), float(boundary[1])
        info = {"policy": "explicit", "values": (v0, vn)}
        rules = (("pin", v0), ("pin", vn))
        return rules, rules, info
    raise InvalidParameterError(f"unknown boundary policy {boundary!r}")


def contact_tolerance(H2, tol_fix, floor=1e-9):
    """Per-node absolute contact tolerance, kept out of the iteration itself."""
    return np.maximum(floor * (1.0 + np.abs(H2)), 10.0 * tol_fix)


def smallest_in_H(obstacles: TransformedObstacles,
                  tolerances: EnvelopeTolerances | None = None,
                  boundary="natural", plain_sweeps=False,
                  record_iterates=False) -> EnvelopeSolution:
    """Smallest admissible curve between the obstacles, with truncation bracket.

    Both brackets solve the same projected fixed-point problem and differ only
    in boundary treatment; the reported W is the high bracket. Raises
    InconsistentObstaclesError if H1 > H2 anywhere and ConvergenceFailureError
    if the iteration budget is exhausted.
    """
    tols = tolerances or EnvelopeTolerances()
    y = obstacles.ygrid
    H1 = np.asarray(obstacles.H1, dtype=float)
    H2 = np.asarray(obstacles.H2, dtype=float)
    if np.any(H1 > H2 * (1 + 1e-15) + 1e-300):
        bad = np.flatnonzero(H1 > H2)
        raise InconsistentObstaclesError(
            f"H1 > H2 at {len(bad)} nodes (first at y={y[bad[0]]})")
    if len(y) < 3:
        raise InvalidParameterError("envelope needs at least 3 nodes")

    rules_lo, rules_hi, info = _bracket_rules(y, H1, H2, boundary, tols)

    if np.all(H2 - H1 <= 1e-15 * (1.0 + np.abs(H2))):
        # degenerate: the admissible set is the single curve H1
        w = H1.copy()
        tol_fix = tols.tol_fix_rel * (1.0 + float(np.max(np.abs(H2))))
        curve = GridCurve(y, w)
        ones = np.ones(len(y), dtype=bool)
        return EnvelopeSolution(curve, curve, curve, 0.0, 0, True, tol_fix,
                                ones, ones.copy(), info)

    w_lo, it1, tol_fix, trace_lo = _solve_one(
        y, H1, H2, rules_lo[0], rules_lo[1], tols, plain_sweeps, record_iterates)
    w_hi, it2, _, trace_hi = _solve_one(
        y, H1, H2, rules_hi[0], rules_hi[1], tols, plain_sweeps, record_iterates)
    w_hi = np.maximum(w_hi, w_lo)  # comparison principle, up to fp dust
    gap = float(np.max(w_hi[1:-1] - w_lo[1:-1])) if len(y) > 2 else 0.0
    tolc = contact_tolerance(H2, tol_fix, tols.contact_floor)
    contact2 = H2 - w_hi <= tolc
    contact1 = w_hi - H1 <= tolc
    return EnvelopeSolution(
        GridCurve(y, w_lo), GridCurve(y, w_hi), GridCurve(y, w_hi),
        max(gap, 0.0), it1 + it2, True, tol_fix, contact1, contact2, info,
        tuple(trace_lo), tuple(trace_hi))


# ---------------------------------------------------------------------------
# hull building blocks


def _upper_hull(xs, ys):
    """Vertices of the least concave majorant of a point set (monotone chain)."""
    hx, hy = [], []
    for x, v in zip(xs, ys):
        while len(hx) >= 2:
            cross = (hx[-1] - hx[-2]) * (v - hy[-2]) - (x - hx[-2]) * (hy[-1] - hy[-2])
            if cross >= 0:  # middle point is on or below the chord: drop it
                hx.pop(); hy.pop()
            else:
                break
        hx.append(x); hy.append(v)
    return np.asarray(hx), np.asarray(hy)


def least_concave_majorant(curve: GridCurve, interval=None) -> GridCurve:
    """Pointwise-smallest concave function above the curve on the interval."""
    lo, hi = interval if interval is not None else (curve.grid[0], curve.grid[-1])
    m = (curve.grid >= lo) & (curve.grid <= hi)
    xs, ys = curve.grid[m], curve.values[m]
    hx, hy = _upper_hull(xs, ys)
    return GridCurve(xs, np.interp(xs, hx, hy))


def greatest_convex_minorant(curve: GridCurve, interval=None) -> GridCurve:
    """Pointwise-largest convex function below the curve on the interval."""
    lo, hi = interval if interval is not None else (curve.grid[0], curve.grid[-1])
    m = (curve.grid >= lo) & (curve.grid <= hi)
    xs, ys = curve.grid[m], curve.values[m]
    hx, hy = _upper_hull(xs, -ys)
    return GridCurve(xs, np.interp(xs, hx, -hy))


def american_value(obstacles: TransformedObstacles,
                   tolerances: EnvelopeTolerances | None = None) -> GridCurve:
    """Perpetual single-obstacle value from the lower payoff alone.

    The transformed value is the least concave majorant of H1, anchored at the
    natural boundary (virtual node (0, l0)) and closed on the right by a
    recession ray whose slope is the trend limit of H1(y)/y. Returns the value
    mapped back to state coordinates; it dominates every game value built on
    the same lower payoff.
    """
    tols = tolerances or EnvelopeTolerances()
    y = obstacles.ygrid
    H1 = np.asarray(obstacles.H1, dtype=float)
    l0, slope = natural_anchors(y, H1, tols.anchor_samples)
    pts_x = [np.asarray([0.0])] if (l0.tag == "converged" and l0.finite) else []
    pts_v = [np.asarray([max(0.0, l0.value)])] if pts_x else []
    pts_x.append(y)
    pts_v.append(H1)
    if slope.tag == "converged" and slope.finite:
        s = max(0.0, slope.value)
        far = y[-1] + 1e6 * (y[-1] - y[0])
        c = float(np.max(H1 - s * y))
        pts_x.append(np.asarray([far]))
        pts_v.append(np.asarray([c + s * far]))
    xs = np.concatenate(pts_x)
    vs = np.concatenate(pts_v)
    hx, hy = _upper_hull(xs, vs)
    w_inf = np.interp(y, hx, hy)
    V_inf = obstacles.phi * w_inf
    return GridCurve(obstacles.back_map.xgrid, V_inf)
