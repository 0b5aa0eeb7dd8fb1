"""Coordinate transform y = F(x) = psi(x)/phi(x) and obstacle mapping.

In y-coordinates the scaled payoffs H_i(y) = g_i(F^-1(y)) / phi(F^-1(y))
become the obstacles of an ordinary double-obstacle envelope problem; the
solved curve maps back through V(x) = phi(x) * W(F(x)).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffusion import FundamentalPair
from .errors import InvalidParameterError, MonotonicityError
from .grids import GridCurve
from .payoffs import PayoffPair


@dataclass(frozen=True)
class Transform:
    """Paired strictly increasing grids with monotone piecewise-linear inversion."""

    xgrid: np.ndarray
    ygrid: np.ndarray

    def __post_init__(self):
        if self.xgrid.shape != self.ygrid.shape:
            raise InvalidParameterError("xgrid and ygrid must be congruent")
        if not np.all(np.diff(self.xgrid) > 0):
            raise MonotonicityError("xgrid must be strictly increasing")
        if not np.all(np.diff(self.ygrid) > 0):
            raise MonotonicityError(
                "F = psi/phi is not strictly increasing on the grid; "
                "the fundamental pair is inadmissible")

    def F(self, x):
        return np.interp(x, self.xgrid, self.ygrid)

    def Finv(self, y):
        return np.interp(y, self.ygrid, self.xgrid)


@dataclass(frozen=True)
class TransformedObstacles:
    """Obstacles 0 <= H1 <= H2 on the transformed grid."""

    ygrid: np.ndarray
    H1: np.ndarray
    H2: np.ndarray
    back_map: Transform
    phi: np.ndarray  # phi on the x-grid, for mapping values and tolerances back

    def __post_init__(self):
        if not np.all(np.diff(self.ygrid) > 0):
            raise MonotonicityError("ygrid must be strictly increasing")
        scale = 1.0 + np.abs(self.H2)
        if np.any(self.H1 < -1e-12 * scale):
            raise InvalidParameterError("H1 must be nonnegative")
        if np.any(self.H1 > self.H2 + 1e-12 * scale):
            raise InvalidParameterError("obstacles must satisfy H1 <= H2")


def build_transform(fundamental: FundamentalPair) -> Transform:
    """Transform from a fundamental pair; fails if F is not strictly increasing."""
    return Transform(fundamental.grid, fundamental.F)


def transform_obstacles(payoffs: PayoffPair, transform: Transform,
                        fundamental: FundamentalPair) -> TransformedObstacles:
    """Pointwise H_i(y_j) = g_i(x_j) / phi(x_j) on the shared grid.

    Payoff kinks must sit exactly on grid nodes so one-sided quantities stay
    evaluable at the transformed kinks.
    """
    x = transform.xgrid
    if x.shape != fundamental.grid.shape or not np.allclose(
            x, fundamental.grid, rtol=0, atol=0):
        raise InvalidParameterError("transform and fundamental must share the x-grid")
    for k in payoffs.kinks:
        if x[0] < k < x[-1]:
            j = int(np.argmin(np.abs(x - k)))
            if abs(x[j] - k) > 1e-9 * (1.0 + k):
                raise InvalidParameterError(
                    f"payoff kink {k} is not a grid node; build the grid with it inserted")
    g1, g2 = payoffs.values_on(x)
    payoffs.check_on_grid(x)
    H1 = g1 / fundamental.phi
    H2 = g2 / fundamental.phi
    H1 = np.maximum(H1, 0.0)
    H2 = np.maximum(H2, H1)
    return TransformedObstacles(transform.ygrid, H1, H2, transform, fundamental.phi)


def untransform_value(W: GridCurve, transform: Transform,
                      fundamental: FundamentalPair) -> GridCurve:
    """Map a transformed curve back: V(x_j) = phi(x_j) * W(y_j)."""
    if len(W.grid) != len(transform.ygrid) or not np.array_equal(W.grid, transform.ygrid):
        raise InvalidParameterError("W must be sampled on the transform's ygrid")
    return GridCurve(transform.xgrid, fundamental.phi * W.values)
