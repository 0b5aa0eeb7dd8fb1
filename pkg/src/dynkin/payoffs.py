"""Piecewise-polynomial contract functions.

Payoffs are piecewise polynomials of degree <= 3 on (0, inf) with an explicit
finite knot set. This keeps one-sided derivatives and the generator exactly
computable, which the contact-set and measure-sign diagnostics rely on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError

_CONT_TOL = 1e-9


class PiecewisePolynomial:
    """Polynomial pieces (degree <= 3) covering (0, inf) contiguously.

    ``pieces`` is a sequence of ``(lo, hi, c0, c1, c2, c3)`` rows in the global
    power basis: p(x) = c0 + c1*x + c2*x**2 + c3*x**3 on (lo, hi]. The first
    piece starts at 0 and the last extends to inf. Interior boundaries are the
    knot set D.
    """

    def __init__(self, pieces):
        rows = [tuple(float(c) for c in row) for row in pieces]
        if not rows:
            raise InvalidParameterError("at least one piece required")
        rows.sort(key=lambda r: r[0])
        if rows[0][0] != 0.0:
            raise InvalidParameterError("first piece must start at 0")
        if not math.isinf(rows[-1][1]):
            raise InvalidParameterError("last piece must extend to inf")
        for a, b in zip(rows[:-1], rows[1:]):
            if not math.isclose(a[1], b[0], rel_tol=1e-12, abs_tol=0.0):
                raise InvalidParameterError(
                    f"pieces must tile (0, inf): gap between {a[1]} and {b[0]}")
            if a[1] <= a[0]:
                raise InvalidParameterError("piece interval is empty")
        self.pieces = rows
        self.knots = np.asarray([r[1] for r in rows[:-1]], dtype=float)
        self._coeffs = np.asarray([r[2:] for r in rows], dtype=float)  # (m, 4)
        self._check_continuity()

    def _check_continuity(self):
        for k in self.knots:
            left = self._eval_piece(self._piece_at(k, side=-1), k)
            right = self._eval_piece(self._piece_at(k, side=+1), k)
            scale = 1.0 + abs(left) + abs(right)
            if abs(left - right) > _CONT_TOL * scale:
                raise InvalidParameterError(
                    f"discontinuity at knot {k}: {left} vs {right}")

    def _piece_at(self, x, side=0):
        # side=-1 evaluates the piece ending at a knot, side=+1 the one starting
        idx = np.searchsorted(self.knots, x, side="left" if side <= 0 else "right")
        return int(idx)

    def _eval_piece(self, idx, x, order=0):
        c0, c1, c2, c3 = self._coeffs[idx]
        if order == 0:
            return ((c3 * x + c2) * x + c1) * x + c0
        if order == 1:
            return (3.0 * c3 * x + 2.0 * c2) * x + c1
        if order == 2:
            return 6.0 * c3 * x + 2.0 * c2
        if order == 3:
            return 6.0 * c3
        return 0.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.knots, x, side="left")
        c = self._coeffs[idx]
        return ((c[..., 3] * x + c[..., 2]) * x + c[..., 1]) * x + c[..., 0]

    def deriv(self, x: float, side: int = +1, order: int = 1) -> float:
        """One-sided derivative at x. ``side`` only matters on a knot."""
        return self._eval_piece(self._piece_at(x, side), float(x), order)

    def is_knot(self, x: float, tol: float = 1e-12) -> bool:
        return bool(len(self.knots)) and bool(
            np.min(np.abs(self.knots - x)) <= tol * (1.0 + abs(x)))

    def kink_jump(self, a: float) -> float:
        """First-derivative jump g'(a+) - g'(a-)."""
        return self.deriv(a, +1) - self.deriv(a, -1)

    def shifted(self, c: float) -> "PiecewisePolynomial":
        return PiecewisePolynomial(
            [(lo, hi, c0 + c, c1, c2, c3) for lo, hi, c0, c1, c2, c3 in self.pieces])

    def scaled(self, c: float) -> "PiecewisePolynomial":
        return PiecewisePolynomial(
            [(lo, hi, c * c0, c * c1, c * c2, c * c3) for lo, hi, c0, c1, c2, c3 in self.pieces])

    @classmethod
    def constant(cls, c: float) -> "PiecewisePolynomial":
        return cls([(0.0, math.inf, c, 0.0, 0.0, 0.0)])

    @classmethod
    def linear(cls, c0: float, c1: float) -> "PiecewisePolynomial":
        return cls([(0.0, math.inf, c0, c1, 0.0, 0.0)])

    @classmethod
    def call(cls, strike: float) -> "PiecewisePolynomial":
        """(x - K)^+ with its single kink at the strike."""
        if strike <= 0:
            raise InvalidParameterError("strike must be positive")
        return cls([
            (0.0, strike, 0.0, 0.0, 0.0, 0.0),
            (strike, math.inf, -strike, 1.0, 0.0, 0.0),
        ])

    def __repr__(self):
        return f"PiecewisePolynomial({len(self.pieces)} pieces, knots={list(self.knots)})"


@dataclass(frozen=True)
class PayoffPair:
    """Contract functions 0 <= g1 <= g2 with the combined kink set D."""

    g1: PiecewisePolynomial
    g2: PiecewisePolynomial

    @property
    def kinks(self) -> np.ndarray:
        return np.unique(np.concatenate([self.g1.knots, self.g2.knots]))

    def check_on_grid(self, grid: np.ndarray, tol: float = 1e-9):
        """Validate 0 <= g1 <= g2 at every node; raise with the violating range."""
        v1 = self.g1(grid)
        v2 = self.g2(grid)
        scale = 1.0 + np.abs(v1) + np.abs(v2)
        bad = v1 < -tol * scale
        if np.any(bad):
            xs = grid[bad]
            raise InvalidParameterError(
                f"g1 negative on [{xs.min()}, {xs.max()}]")
        bad = v1 > v2 + tol * scale
        if np.any(bad):
            xs = grid[bad]
            raise InvalidParameterError(
                f"payoff sandwich violated (g1 > g2) on [{xs.min()}, {xs.max()}]")

    def values_on(self, grid: np.ndarray):
        return self.g1(grid), self.g2(grid)
