"""Grids, sampled curves, and boundary-trend extrapolation.

The state space is (0, inf) with natural endpoints, so solve grids are
logarithmically spaced and payoff kinks are inserted as exact nodes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError, MonotonicityError


def log_grid(x_min: float, x_max: float, n_points: int, insert=()) -> np.ndarray:
    """Strictly increasing log-spaced grid on [x_min, x_max] with exact extra nodes.

    Points in ``insert`` that fall inside (x_min, x_max) are added verbatim;
    near-duplicates (relative distance below 1e-12) collapse onto the existing
    node so kinks stay unique grid points.
    """
    if not (0.0 < x_min < x_max):
        raise InvalidParameterError(f"need 0 < x_min < x_max, got [{x_min}, {x_max}]")
    if n_points < 3:
        raise InvalidParameterError("grid needs at least 3 points")
    base = np.geomspace(x_min, x_max, n_points)
    extra = [p for p in insert if x_min < p < x_max]
    if not extra:
        return base
    merged = np.sort(np.concatenate([base, np.asarray(extra, dtype=float)]))
    keep = np.ones(len(merged), dtype=bool)
    rel = np.diff(merged) / merged[1:]
    keep[1:] = rel > 1e-12
    # never drop an explicitly inserted point in favour of a base node
    out = merged[keep]
    for p in extra:
        j = int(np.argmin(np.abs(out - p)))
        out[j] = p
    return out


@dataclass(frozen=True)
class GridCurve:
    """A function sampled on a strictly increasing grid."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if g.ndim != 1 or v.shape != g.shape:
            raise InvalidParameterError("grid and values must be 1-d and congruent")
        if not np.all(np.diff(g) > 0):
            raise MonotonicityError("grid must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise InvalidParameterError("curve values must be finite")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return len(self.grid)

    def __call__(self, x):
        return np.interp(x, self.grid, self.values)

    def restrict(self, lo: float, hi: float) -> "GridCurve":
        m = (self.grid >= lo) & (self.grid <= hi)
        return GridCurve(self.grid[m], self.values[m])


@dataclass(frozen=True)
class TrendEstimate:
    """Extrapolated boundary limit of a sampled sequence, with honesty tags.

    ``tag`` is one of ``converged`` (geometric-looking decay of increments,
    Aitken limit trusted), ``diverging`` (increments grow; ``value`` is
    +/-inf), ``oscillating`` (sign-flipping increments) or ``indeterminate``.
    ``spread`` is a half-width uncertainty; it widens the envelope brackets.
    """

    value: float
    spread: float
    tag: str
    samples: tuple = field(default=(), repr=False)

    @property
    def is_zero(self) -> bool:
        return self.tag == "converged" and abs(self.value) <= max(self.spread, 1e-9)

    @property
    def finite(self) -> bool:
        return math.isfinite(self.value)


def trend_limit(samples, scale: float = 1.0) -> TrendEstimate:
    """Estimate the limit of ``samples`` as they approach a boundary.

    Samples are ordered from the interior toward the boundary (the last entry
    is the closest). Consecutive Aitken windows give the limit; the spread is
    the scatter of the windows. Geometric sampling of the abscissa makes a
    single power-mode decay exactly geometric, which Aitken resolves.
    """
    v = np.asarray(samples, dtype=float)
    if len(v) < 4:
        raise InvalidParameterError("trend_limit needs at least 4 samples")
    floor = 1e-13 * (scale + np.max(np.abs(v)))
    if np.max(np.abs(v)) <= 1e-13 * scale:
        return TrendEstimate(0.0, 1e-13 * scale, "converged", tuple(v))
    d = np.diff(v)
    if np.max(np.abs(d)) <= floor:
        return TrendEstimate(float(v[-1]), float(np.max(np.abs(d)) + floor), "converged", tuple(v))
    signs = np.sign(d[np.abs(d) > floor])
    if len(signs) >= 2 and np.any(signs[1:] * signs[:-1] < 0):
        mid = float(np.mean(v[-3:]))
        return TrendEstimate(mid, float(np.ptp(v)), "oscillating", tuple(v))
    ratios = []
    for k in range(len(d) - 1):
        if abs(d[k]) > floor:
            ratios.append(d[k + 1] / d[k])
    if not ratios:
        return TrendEstimate(float(v[-1]), float(np.max(np.abs(d)) + floor), "converged", tuple(v))
    ratios = np.asarray(ratios)
    if np.median(ratios) >= 1.0 - 1e-9:
        val = math.inf if d[-1] > 0 else -math.inf
        return TrendEstimate(val, math.inf, "diverging", tuple(v))
    if np.any(ratios <= 0):
        mid = float(np.mean(v[-3:]))
        return TrendEstimate(mid, float(np.ptp(v)), "oscillating", tuple(v))
    # Aitken delta-squared over every admissible window
    extrap = []
    for k in range(len(v) - 2):
        denom = v[k + 2] - 2.0 * v[k + 1] + v[k]
        if abs(denom) > floor * 1e-3:
            extrap.append(v[k + 2] - (v[k + 2] - v[k + 1]) ** 2 / denom)
    if not extrap:
        return TrendEstimate(float(v[-1]), float(np.max(np.abs(d))), "indeterminate", tuple(v))
    extrap = np.asarray(extrap)
    med = float(np.median(extrap))
    spread = float(np.max(np.abs(extrap - med)) + floor)
    return TrendEstimate(med, spread, "converged", tuple(v))


def edge_samples(values: np.ndarray, side: str, count: int = 10, span: float = 0.15):
    """Indices of ``count`` nodes spread over the outer ``span`` fraction of one edge.

    Returned indices are ordered from the interior toward the boundary, which
    is the order :func:`trend_limit` expects.
    """
    n = len(values)
    m = max(count, int(round(span * n)))
    m = min(m, n - 1)
    # constant stride keeps geometrically sampled sequences exactly geometric,
    # which the Aitken extrapolation in trend_limit relies on
    stride = max(1, (m - 1) // (count - 1))
    offsets = [stride * j for j in range(count)][::-1]  # interior -> boundary
    if side == "left":
        return [o for o in offsets if o < n]
    if side == "right":
        return [n - 1 - o for o in offsets if o < n]
    raise InvalidParameterError("side must be 'left' or 'right'")
