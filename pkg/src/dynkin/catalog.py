"""Closed-form reference problems used as acceptance oracles."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .diffusion import DiffusionModel, make_model
from .errors import InvalidParameterError, ParameterDomainError
from .payoffs import PayoffPair, PiecewisePolynomial


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    model: DiffusionModel
    payoffs: PayoffPair
    params: dict
    value_fn: Callable          # vectorized closed-form value
    piece_boundary: float       # where the closed form switches branch
    expected_E1: tuple          # intervals in (0, inf); math.inf allowed
    expected_E2: tuple
    gamma_target: tuple         # the seller's first-entry target interval
    expected_verdict: str

    def __post_init__(self):
        xb = self.piece_boundary
        left = float(self.value_fn(np.asarray(xb * (1 - 1e-13))))
        right = float(self.value_fn(np.asarray(xb * (1 + 1e-13))))
        scale = 1.0 + abs(left) + abs(right)
        if abs(left - right) > 1e-10 * scale:
            raise InvalidParameterError(
                f"catalog closed form discontinuous at {xb}: {left} vs {right}")
        xs = np.geomspace(xb / 50.0, xb * 50.0, 301)
        v = self.value_fn(xs)
        g1 = self.payoffs.g1(xs)
        g2 = self.payoffs.g2(xs)
        sc = 1.0 + np.abs(g2)
        if np.any(v < g1 - 1e-9 * sc) or np.any(v > g2 + 1e-9 * sc):
            raise InvalidParameterError(
                f"catalog closed form escapes the payoff sandwich for {self.name}")


def game_call(K: float, eps: float, model: DiffusionModel | None = None,
              *, beta: float = 0.05, sigma: float = 0.3) -> CatalogEntry:
    """Call payoff for the buyer, the same plus a cancellation fee for the seller.

    Valid for any model with drift(x) = beta*x while eps < K; at eps >= K the
    problem degenerates to the single-obstacle perpetual value (route there
    instead of calling this).
    """
    if model is None:
        model = make_model("gbm", beta=beta, sigma=sigma)
    if model.family_tag not in ("gbm", "beta_drift_general_vol"):
        raise ParameterDomainError("game_call requires drift(x) = beta*x")
    if not 0 < eps < K:
        raise ParameterDomainError(
            f"game_call needs 0 < eps < K; eps={eps}, K={K} reduces to the "
            "single-obstacle perpetual value")
    g1 = PiecewisePolynomial.call(K)
    g2 = g1.shifted(eps)

    def value(x):
        x = np.asarray(x, dtype=float)
        return np.where(x <= K, eps * x / K, x - K + eps)

    return CatalogEntry(
        name="game_call",
        model=model,
        payoffs=PayoffPair(g1, g2),
        params={"K": K, "eps": eps, "beta": model.beta},
        value_fn=value,
        piece_boundary=K,
        expected_E1=(),
        expected_E2=((K, math.inf),),
        gamma_target=(K, math.inf),
        expected_verdict="seller-only",
    )


def scaled_call(K: float, C: float, beta: float, sigma: float) -> CatalogEntry:
    """Buyer holds a call, the seller's obstacle is the same call scaled by C.

    Two regimes split at C = 1 + 2 beta / sigma^2: a large factor pushes the
    seller to stop below the strike (case 1); a small one moves the boundary
    to x' = 2 beta C K / ((2 beta + sigma^2)(C - 1)) above it (case 2), where
    the value loses convexity.
    """
    if C <= 1:
        raise ParameterDomainError(f"scaled_call needs C > 1, got {C}")
    model = make_model("gbm", beta=beta, sigma=sigma)
    gamma = 2.0 * beta / sigma**2
    g1 = PiecewisePolynomial.call(K)
    g2 = g1.scaled(C)
    payoffs = PayoffPair(g1, g2)
    if C >= 1.0 + gamma:
        Kpow = K ** ((2.0 * beta + sigma**2) / sigma**2)

        def value(x):
            x = np.asarray(x, dtype=float)
            return np.maximum(x - Kpow * x ** (-gamma), 0.0)

        return CatalogEntry(
            name="scaled_call_case1",
            model=model,
            payoffs=payoffs,
            params={"K": K, "C": C, "beta": beta, "sigma": sigma, "case": 1},
            value_fn=value,
            piece_boundary=K,
            expected_E1=((0.0, K),),
            expected_E2=((0.0, K),),
            gamma_target=(0.0, K),
            expected_verdict="seller-only",
        )

    x_prime = 2.0 * beta * C * K / ((2.0 * beta + sigma**2) * (C - 1.0))
    A = C * K * sigma**2 / (2.0 * beta + sigma**2)

    def value(x):
        x = np.asarray(x, dtype=float)
        return np.where(x < x_prime,
                        C * np.maximum(x - K, 0.0),
                        x - A * (x_prime / x) ** gamma)

    return CatalogEntry(
        name="scaled_call_case2",
        model=model,
        payoffs=payoffs,
        params={"K": K, "C": C, "beta": beta, "sigma": sigma, "case": 2,
                "x_prime": x_prime, "tail_coeff": A},
        value_fn=value,
        piece_boundary=x_prime,
        expected_E1=((0.0, K),),
        expected_E2=((0.0, x_prime),),
        gamma_target=(0.0, x_prime),
        expected_verdict="seller-only",
    )


_BUILDERS = {
    "game_call": lambda p: game_call(p.get("K", 100.0), p.get("eps", 5.0),
                                     beta=p.get("beta", 0.05),
                                     sigma=p.get("sigma", 0.3)),
    "scaled_call": lambda p: scaled_call(p.get("K", 100.0), p.get("C", 2.0),
                                         p.get("beta", 0.05), p.get("sigma", 0.3)),
}


def catalog_names():
    return sorted(_BUILDERS)


def get_entry(name: str, params: dict | None = None) -> CatalogEntry:
    if name not in _BUILDERS:
        raise InvalidParameterError(
            f"unknown catalog entry {name!r}; available: {catalog_names()}")
    return _BUILDERS[name](params or {})
