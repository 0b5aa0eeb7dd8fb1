"""Stopping regions, smooth fit, generator sign tests, saddle classification."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .diffusion import DiffusionModel, FundamentalPair, generator_apply
from .errors import InvalidParameterError, SandwichViolationError
from .grids import GridCurve, TrendEstimate, edge_samples, trend_limit
from .payoffs import PayoffPair
from .simulate import Strategy


@dataclass(frozen=True)
class StoppingRegions:
    """Contact sets in state space and the first-entry rules they induce."""

    E1: tuple  # disjoint closed intervals where V = g1 (buyer stops)
    E2: tuple  # disjoint closed intervals where V = g2 (seller stops)
    tau_star_rule: Strategy
    gamma_star_rule: Strategy
    isolated_nodes: tuple = ()  # single-node contacts, low confidence

    @staticmethod
    def _covers(intervals, x):
        return any(a <= x <= b for a, b in intervals)

    def in_E1(self, x):
        return self._covers(self.E1, x)

    def in_E2(self, x):
        return self._covers(self.E2, x)


def _contact_runs(grid, mask):
    runs = []
    i = 0
    n = len(grid)
    while i < n:
        if mask[i]:
            j = i
            while j + 1 < n and mask[j + 1]:
                j += 1
            runs.append((float(grid[i]), float(grid[j]), j - i + 1))
            i = j + 1
        else:
            i += 1
    return runs


def extract_regions(V: GridCurve, payoffs: PayoffPair, tol_contact=None) -> StoppingRegions:
    """Merge maximal runs of contact nodes into closed intervals.

    Contact tolerance scales with the local curve magnitude; isolated
    one-node contacts are kept as degenerate intervals but reported apart.
    """
    x = V.grid
    g1, g2 = payoffs.values_on(x)
    v = V.values
    scale = 1.0 + np.maximum(np.abs(g2), np.abs(v))
    if tol_contact is None:
        tol = 1e-7 * scale
    else:
        tol = np.broadcast_to(np.asarray(tol_contact, dtype=float), v.shape) * scale
    if np.any(v < g1 - tol) or np.any(v > g2 + tol):
        i = int(np.argmax(np.maximum(g1 - v, v - g2) / scale))
        raise SandwichViolationError(
            f"value escapes the payoff sandwich at x={x[i]} "
            f"(V={v[i]}, g1={g1[i]}, g2={g2[i]})")
    m1 = np.abs(v - g1) <= tol
    m2 = np.abs(v - g2) <= tol
    runs1 = _contact_runs(x, m1)
    runs2 = _contact_runs(x, m2)
    E1 = tuple((a, b) for a, b, _ in runs1)
    E2 = tuple((a, b) for a, b, _ in runs2)
    isolated = tuple(a for a, b, cnt in runs1 + runs2 if cnt == 1)
    tau = Strategy.first_entry(*E1) if E1 else Strategy.never()
    gam = Strategy.first_entry(*E2) if E2 else Strategy.never()
    return StoppingRegions(E1, E2, tau, gam, isolated)


def one_sided_slope(grid, values, i, side):
    """Second-order one-sided difference quotient on an uneven grid."""
    n = len(grid)
    if side > 0:
        js = [i, i + 1, i + 2] if i + 2 < n else [i, i + 1]
    else:
        js = [i - 2, i - 1, i] if i - 2 >= 0 else [i - 1, i]
    xs = grid[js] - grid[i]
    vs = values[js]
    deg = len(js) - 1
    coef = np.polyfit(xs, vs, deg)
    return float(coef[-2])


@dataclass(frozen=True)
class SmoothFitPoint:
    x0: float
    obstacle: int          # 1 or 2
    applicable: bool
    v_slope_left: float
    v_slope_right: float
    g_slope_left: float
    g_slope_right: float
    tol: float
    passed: bool
    sandwich_y: dict = field(default_factory=dict)
    note: str = ""


@dataclass(frozen=True)
class SmoothFitReport:
    points: tuple

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.points)


def _y_sandwich(W, H, y0_idx, obstacle):
    """One-sided derivative sandwich at a contact point in transformed space.

    At a lower contact slopes satisfy d-H >= d-W >= d+W >= d+H; at an upper
    contact the chain is mirrored. The middle inequality is only required
    where the obstacles are strictly separated (it genuinely fails otherwise).
    """
    yg, w = W.grid, W.values
    h = H
    dWm = one_sided_slope(yg, w, y0_idx, -1) if y0_idx > 0 else math.nan
    dWp = one_sided_slope(yg, w, y0_idx, +1) if y0_idx < len(yg) - 1 else math.nan
    dHm = one_sided_slope(yg, h, y0_idx, -1) if y0_idx > 0 else math.nan
    dHp = one_sided_slope(yg, h, y0_idx, +1) if y0_idx < len(yg) - 1 else math.nan
    return {"dW_left": dWm, "dW_right": dWp, "dH_left": dHm, "dH_right": dHp,
            "obstacle": obstacle}


def _sandwich_holds(s, tol, check_middle):
    dWm, dWp = s["dW_left"], s["dW_right"]
    dHm, dHp = s["dH_left"], s["dH_right"]
    if any(math.isnan(v) for v in (dWm, dWp, dHm, dHp)):
        return True
    if s["obstacle"] == 1:
        outer = (dHm >= dWm - tol) and (dWp >= dHp - tol)
        middle = dWm >= dWp - tol
    else:
        outer = (dHm <= dWm + tol) and (dWp <= dHp + tol)
        middle = dWm <= dWp + tol
    return outer and (middle or not check_middle)


def smooth_fit_check(V: GridCurve, payoffs: PayoffPair, regions: StoppingRegions,
                     fundamental: FundamentalPair, tol_fit=None) -> SmoothFitReport:
    """Verify first-order contact conditions at every interior region endpoint.

    Where the contacted payoff is differentiable and the obstacles are
    strictly separated, the value's one-sided slopes must both match the
    payoff slope (smooth fit). Elsewhere only the derivative sandwich in
    transformed coordinates is asserted, skipping the middle inequality when
    the obstacles touch.
    """
    x = V.grid
    g1v, g2v = payoffs.values_on(x)
    y = fundamental.F
    W = GridCurve(y, V.values / fundamental.phi)
    H = {1: g1v / fundamental.phi, 2: g2v / fundamental.phi}
    gfn = {1: payoffs.g1, 2: payoffs.g2}
    points = []
    for obstacle, intervals in ((1, regions.E1), (2, regions.E2)):
        for a, b in intervals:
            for x0 in {a, b}:
                i = int(np.argmin(np.abs(x - x0)))
                if i <= 1 or i >= len(x) - 2:
                    continue  # domain-edge contacts carry no fit condition
                g = gfn[obstacle]
                h = x[min(i + 1, len(x) - 1)] - x[max(i - 1, 0)]
                tol = tol_fit if tol_fit is not None else max(1e-2, 5.0 * h)
                separated = g1v[i] < g2v[i] - 1e-9 * (1.0 + abs(g2v[i]))
                smooth_payoff = not g.is_knot(x0)
                applicable = separated and smooth_payoff
                vL = one_sided_slope(x, V.values, i, -1)
                vR = one_sided_slope(x, V.values, i, +1)
                gL = g.deriv(x0, -1)
                gR = g.deriv(x0, +1)
                if applicable:
                    passed = abs(vL - gL) <= tol and abs(vR - gR) <= tol
                    sandw = {}
                    note = "smooth fit"
                else:
                    sandw = _y_sandwich(W, H[obstacle], i, obstacle)
                    stol = max(1e-6, 1e-6 * (abs(sandw["dH_left"]) + abs(sandw["dH_right"]))) \
                        + 5.0 * (y[min(i + 1, len(y) - 1)] - y[max(i - 1, 0)]) * 1e-2
                    passed = _sandwich_holds(sandw, stol, check_middle=separated)
                    note = "derivative sandwich" + ("" if separated else " (obstacles touch)")
                points.append(SmoothFitPoint(float(x0), obstacle, applicable,
                                             vL, vR, gL, gR, tol, passed,
                                             sandw, note))
    return SmoothFitReport(tuple(points))


@dataclass(frozen=True)
class MeasureSignReport:
    interval: tuple
    interior_min: float
    interior_max: float
    kink_jumps: dict
    verdict: str  # nonzero-nonnegative | nonzero-nonpositive | zero | mixed
    expected_region_empty: str = ""  # "E1"/"E2" when the contact-set conclusion applies

    def consistent(self) -> bool:
        tol = 1e-10 * (1.0 + abs(self.interior_max) + abs(self.interior_min))
        jumps = list(self.kink_jumps.values())
        if self.verdict == "nonzero-nonnegative":
            return (self.interior_min >= -tol and all(j >= -tol for j in jumps)
                    and (self.interior_max > tol or any(j > tol for j in jumps)))
        if self.verdict == "nonzero-nonpositive":
            return (self.interior_max <= tol and all(j <= tol for j in jumps)
                    and (self.interior_min < -tol or any(j < -tol for j in jumps)))
        if self.verdict == "zero":
            return (abs(self.interior_min) <= tol and abs(self.interior_max) <= tol
                    and all(abs(j) <= tol for j in jumps))
        return True


def generator_measure_sign(g, model: DiffusionModel, interval,
                           other=None, which: int = 1,
                           n_samples: int = 257) -> MeasureSignReport:
    """Sign profile of the generator applied to a payoff, as a measure.

    Interior values are sampled off the kink set; each kink contributes its
    derivative jump. When ``other`` is supplied and stays strictly above
    (below) ``g`` on the interval, a nonzero one-signed profile implies the
    corresponding contact set cannot meet the interval's interior.
    """
    lo, hi = interval
    lo = max(lo, 1e-8)
    hi_eff = hi if math.isfinite(hi) else max(1e4, 100.0 * lo)
    if not lo < hi_eff:
        raise InvalidParameterError("empty interval")
    xs = np.geomspace(lo * (1 + 1e-12), hi_eff * (1 - 1e-12), n_samples)
    kinks = [a for a in g.knots if lo < a < hi_eff]
    vals = []
    for x in xs:
        if g.is_knot(x):
            continue
        vals.append(generator_apply(model, g, float(x)))
    vals = np.asarray(vals)
    jumps = {float(a): g.kink_jump(a) for a in kinks}
    vmin, vmax = float(vals.min()), float(vals.max())
    scale = 1.0 + max(abs(vmin), abs(vmax)) + model.beta * float(np.max(np.abs(g(xs))))
    tol = 1e-12 * scale
    jv = list(jumps.values())
    nonneg = vmin >= -tol and all(j >= -tol for j in jv)
    nonpos = vmax <= tol and all(j <= tol for j in jv)
    strict_pos = vmax > tol or any(j > tol for j in jv)
    strict_neg = vmin < -tol or any(j < -tol for j in jv)
    if nonneg and not strict_pos and nonpos and not strict_neg:
        verdict = "zero"
    elif nonneg and strict_pos:
        verdict = "nonzero-nonnegative"
    elif nonpos and strict_neg:
        verdict = "nonzero-nonpositive"
    else:
        verdict = "mixed"
    conclusion = ""
    if other is not None and verdict in ("nonzero-nonnegative", "nonzero-nonpositive"):
        ov = other(xs)
        gv = g(xs)
        sc = 1.0 + np.abs(ov) + np.abs(gv)
        if which == 1 and verdict == "nonzero-nonnegative" and np.all(ov > gv + 1e-9 * sc):
            conclusion = "E1"
        if which == 2 and verdict == "nonzero-nonpositive" and np.all(ov < gv - 1e-9 * sc):
            conclusion = "E2"
    return MeasureSignReport((float(lo), float(hi)), vmin, vmax, jumps,
                             verdict, conclusion)


def boundary_growth(payoffs: PayoffPair, fundamental: FundamentalPair,
                    count: int = 10):
    """Trend proxies for the growth rates of g1 against phi at 0 and psi at inf."""
    x = fundamental.grid
    g1 = payoffs.g1(x)
    left = edge_samples(g1, "left", count)
    right = edge_samples(g1, "right", count)
    ratio0 = g1[left] / fundamental.phi[left]
    ratioI = g1[right] / fundamental.psi[right]
    scale = 1.0 + float(np.max(np.abs(ratio0))) + float(np.max(np.abs(ratioI)))
    l0 = trend_limit(ratio0, scale=scale)
    linf = trend_limit(ratioI, scale=scale)
    return l0, linf


@dataclass(frozen=True)
class SaddleVerdict:
    l0: TrendEstimate
    linf: TrendEstimate
    integrability_42: bool
    verdict: str  # "saddle (tau*,gamma*)" | "seller-only" | "indeterminate"
    reasons: tuple
    truncation_note: str = ""

    @property
    def is_saddle(self) -> bool:
        return self.verdict.startswith("saddle")


def classify_saddle(l0: TrendEstimate, linf: TrendEstimate,
                    regions: StoppingRegions, integrability_42: bool,
                    domain=None, edge_fraction: float = 0.02) -> SaddleVerdict:
    """Classify saddle existence from the growth proxies and the contact sets.

    A saddle needs the declared integrability plus either both growth rates
    vanishing or, when one is positive, the buyer's contact set reaching the
    corresponding end of the (truncated) domain. Verdicts based on truncated
    evidence carry a note; the seller's first-entry rule is optimal either way.
    """
    reasons = []
    note = ""
    zero0 = l0.is_zero
    zeroI = linf.is_zero
    if not integrability_42:
        reasons.append("integrability condition not declared; saddle theorems unavailable")
        return SaddleVerdict(l0, linf, False, "indeterminate", tuple(reasons))
    if l0.tag in ("oscillating", "indeterminate") or linf.tag in ("oscillating", "indeterminate"):
        reasons.append(f"growth trends unresolved (l0: {l0.tag}, linf: {linf.tag})")
        return SaddleVerdict(l0, linf, True, "indeterminate", tuple(reasons))
    if zero0 and zeroI:
        reasons.append("l0 = linf = 0 with declared integrability")
        return SaddleVerdict(l0, linf, True, "saddle (tau*,gamma*)", tuple(reasons))

    ok = True
    if domain is None:
        note = "edge evidence unavailable"
        ok = False
    else:
        x_lo, x_hi = domain
        span = math.log(x_hi / x_lo)
        if not zeroI:
            right_edge = x_hi / math.exp(edge_fraction * span)
            reach = any(b >= right_edge for _, b in regions.E1)
            if reach:
                reasons.append(
                    f"linf = {linf.value:.3g} > 0 and E1 reaches the right edge "
                    "of the truncated domain")
                note = "right-edge evidence is truncated-domain only"
            else:
                reasons.append(
                    f"linf = {linf.value:.3g} > 0 but E1 stays away from the right edge")
                ok = False
        if not zero0 and ok:
            left_edge = x_lo * math.exp(edge_fraction * span)
            reach = any(a <= left_edge for a, _ in regions.E1)
            if reach:
                reasons.append(
                    f"l0 = {l0.value:.3g} > 0 and E1 reaches the left edge")
                note = "left-edge evidence is truncated-domain only"
            else:
                reasons.append(
                    f"l0 = {l0.value:.3g} > 0 but E1 stays away from the left edge")
                ok = False
    if ok:
        return SaddleVerdict(l0, linf, True, "saddle (tau*,gamma*)", tuple(reasons), note)
    reasons.append("seller's first-entry rule remains optimal regardless")
    return SaddleVerdict(l0, linf, True, "seller-only", tuple(reasons), note)
