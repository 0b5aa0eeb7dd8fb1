"""Diffusion models and the fundamental solution pair.

A model is dX = mu(X) dt + sigma(X) dW on (0, inf) with discount rate beta.
The homogeneous equation (sigma^2/2) u'' + mu u' - beta u = 0 has a positive
strictly increasing solution psi and a positive strictly decreasing solution
phi, unique up to scaling; their ratio F = psi/phi drives the coordinate
transform used by the envelope solver.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded

from .errors import (ConvergenceFailureError, InvalidParameterError,
                     KinkPointError, QuadratureError)
from .payoffs import PiecewisePolynomial

FAMILIES = ("gbm", "beta_drift_general_vol", "custom")


def _poly_eval(coeffs, x):
    out = np.zeros_like(np.asarray(x, dtype=float))
    for c in reversed(coeffs):
        out = out * x + c
    return out


@dataclass(frozen=True, eq=False)
class DiffusionModel:
    """Immutable diffusion specification; safe for concurrent reads."""

    family_tag: str
    beta: float
    drift_spec: Callable
    vol_spec: Callable
    integrability_42_declared: bool = True
    params: dict = field(default_factory=dict)

    def drift(self, x):
        return self.drift_spec(np.asarray(x, dtype=float))

    def vol(self, x):
        return self.vol_spec(np.asarray(x, dtype=float))

    def validate_on_grid(self, grid: np.ndarray):
        """Positivity of sigma and a finite-jump continuity probe at grid scale."""
        v = self.vol(grid)
        if np.any(~np.isfinite(v)) or np.any(v <= 0):
            raise InvalidParameterError("vol_spec must be strictly positive on the grid")
        mu = self.drift(grid)
        if np.any(~np.isfinite(mu)):
            raise InvalidParameterError("drift_spec must be finite on the grid")
        for name, vals in (("vol", v), ("drift", mu)):
            scale = 1.0 + np.abs(vals[:-1]) + np.abs(vals[1:])
            jumps = np.abs(np.diff(vals)) / scale
            rel_h = np.diff(grid) / grid[1:]
            if np.any(jumps > np.maximum(50.0 * rel_h, 1e-3)):
                raise InvalidParameterError(
                    f"{name}_spec looks discontinuous at grid resolution")


def make_model(family_tag: str, *, beta: float, sigma: float | None = None,
               vol_coeffs=None, drift_coeffs=None,
               drift: Callable | None = None, vol: Callable | None = None,
               integrability_42: bool = True) -> DiffusionModel:
    """Build a model from a named parameter family.

    gbm:                      drift = beta*x, vol = sigma*x (sigma > 0)
    beta_drift_general_vol:   drift = beta*x, vol from coeffs or callable
    custom:                   drift and vol given explicitly
    """
    if family_tag not in FAMILIES:
        raise InvalidParameterError(f"unknown family {family_tag!r}")
    if not (isinstance(beta, (int, float)) and beta > 0):
        raise InvalidParameterError(f"beta must be positive, got {beta}")
    beta = float(beta)
    params: dict = {"beta": beta}

    if family_tag == "gbm":
        if sigma is None or sigma <= 0:
            raise InvalidParameterError(f"gbm requires sigma > 0, got {sigma}")
        sigma = float(sigma)
        params["sigma"] = sigma
        params["drift_coeffs"] = (0.0, beta)
        params["vol_coeffs"] = (0.0, sigma)
        return DiffusionModel(family_tag, beta,
                              drift_spec=lambda x: beta * x,
                              vol_spec=lambda x: sigma * x,
                              integrability_42_declared=integrability_42,
                              params=params)

    if family_tag == "beta_drift_general_vol":
        if vol is None and vol_coeffs is None:
            raise InvalidParameterError("beta_drift_general_vol needs vol or vol_coeffs")
        if vol_coeffs is not None:
            vc = tuple(float(c) for c in vol_coeffs)
            params["vol_coeffs"] = vc
            vol_fn = lambda x, _vc=vc: _poly_eval(_vc, x)
        else:
            vol_fn = vol
        params["drift_coeffs"] = (0.0, beta)
        return DiffusionModel(family_tag, beta,
                              drift_spec=lambda x: beta * x,
                              vol_spec=vol_fn,
                              integrability_42_declared=integrability_42,
                              params=params)

    # custom
    if drift is None and drift_coeffs is None:
        raise InvalidParameterError("custom family needs drift or drift_coeffs")
    if vol is None and vol_coeffs is None:
        raise InvalidParameterError("custom family needs vol or vol_coeffs")
    if drift_coeffs is not None:
        dc = tuple(float(c) for c in drift_coeffs)
        params["drift_coeffs"] = dc
        drift = lambda x, _dc=dc: _poly_eval(_dc, x)
    if vol_coeffs is not None:
        vc = tuple(float(c) for c in vol_coeffs)
        params["vol_coeffs"] = vc
        vol = lambda x, _vc=vc: _poly_eval(_vc, x)
    return DiffusionModel("custom", beta, drift_spec=drift, vol_spec=vol,
                          integrability_42_declared=integrability_42, params=params)


@dataclass(frozen=True, eq=False)
class FundamentalPair:
    """Grid samples of psi (increasing) and phi (decreasing), normalized at x_ref.

    ``psi_fn``/``phi_fn`` evaluate off-grid (closed form where available,
    cubic spline of the solve otherwise); the ``*_d`` callables give first and
    second derivatives for diagnostics. ``ode_residual_rel`` is the relative
    residual of the construction on its own discretization.
    """

    grid: np.ndarray
    psi: np.ndarray
    phi: np.ndarray
    normalization_point: float
    psi_fn: Callable
    phi_fn: Callable
    psi_d: Callable   # psi_d(x, order) for order in {1, 2}
    phi_d: Callable
    closed_form: bool
    ode_residual_rel: float
    natural_decay: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.all(np.diff(self.grid) > 0):
            raise InvalidParameterError("fundamental grid must be strictly increasing")
        if np.any(self.psi <= 0) or np.any(self.phi <= 0):
            raise ConvergenceFailureError("fundamental pair must be strictly positive")
        if not np.all(np.diff(self.psi) > 0):
            raise ConvergenceFailureError("psi must be strictly increasing")
        if not np.all(np.diff(self.phi) < 0):
            raise ConvergenceFailureError("phi must be strictly decreasing")
        F = self.psi / self.phi
        if not np.all(np.diff(F) > 0):
            raise ConvergenceFailureError("F = psi/phi must be strictly increasing")

    @property
    def F(self) -> np.ndarray:
        return self.psi / self.phi

    def rescaled(self, c_psi: float, c_phi: float) -> "FundamentalPair":
        """Scale the pair by positive constants (the game value is invariant)."""
        if c_psi <= 0 or c_phi <= 0:
            raise InvalidParameterError("scalings must be positive")
        return FundamentalPair(
            self.grid, self.psi * c_psi, self.phi * c_phi,
            self.normalization_point,
            lambda x: self.psi_fn(x) * c_psi, lambda x: self.phi_fn(x) * c_phi,
            lambda x, order=1: self.psi_d(x, order) * c_psi,
            lambda x, order=1: self.phi_d(x, order) * c_phi,
            self.closed_form, self.ode_residual_rel, dict(self.natural_decay))


def _natural_flags(grid, psi, phi, x_ref, fraction):
    """Decay-trend flags toward the truncated ends (flagged, never proven)."""
    ref_psi = np.interp(x_ref, grid, psi)
    ref_phi = np.interp(x_ref, grid, phi)
    return {
        "psi_left_decay": bool(psi[0] <= fraction * ref_psi),
        "phi_right_decay": bool(phi[-1] <= fraction * ref_phi),
        "fraction": float(fraction),
    }


def _closed_form_gbm(model, grid, x_ref, natural_fraction):
    beta = model.beta
    sigma = model.params["sigma"]
    gamma = 2.0 * beta / sigma**2

    def psi_fn(x):
        return np.asarray(x, dtype=float) / x_ref

    def phi_fn(x):
        return (np.asarray(x, dtype=float) / x_ref) ** (-gamma)

    def psi_d(x, order=1):
        if order == 1:
            return np.ones_like(np.asarray(x, dtype=float)) / x_ref
        return np.zeros_like(np.asarray(x, dtype=float))

    def phi_d(x, order=1):
        x = np.asarray(x, dtype=float)
        if order == 1:
            return -gamma * x ** (-gamma - 1.0) * x_ref**gamma
        return gamma * (gamma + 1.0) * x ** (-gamma - 2.0) * x_ref**gamma

    psi = psi_fn(grid)
    phi = phi_fn(grid)
    resid = _analytic_residual(model, grid, psi_fn, psi_d, phi_fn, phi_d)
    return FundamentalPair(grid, psi, phi, x_ref, psi_fn, phi_fn, psi_d, phi_d,
                           True, resid,
                           _natural_flags(grid, psi, phi, x_ref, natural_fraction))


def _analytic_residual(model, grid, psi_fn, psi_d, phi_fn, phi_d):
    x = grid
    s2 = model.vol(x) ** 2 / 2.0
    mu = model.drift(x)
    r = 0.0
    for f, d in ((psi_fn, psi_d), (phi_fn, phi_d)):
        u = f(x)
        res = s2 * d(x, 2) + mu * d(x, 1) - model.beta * u
        r = max(r, float(np.max(np.abs(res)) / np.max(np.abs(u))))
    return r


def _bvp_solve(model, t, which):
    """Second-order FD solve of the ODE in t = ln x with Dirichlet data.

    ``which`` = 'psi' uses u=0 at the far-left (recessive) end and 1 at the
    right; 'phi' is mirrored. The far ends sit well outside the requested
    window so the misfit of the zero boundary guess decays to negligible
    levels by the time the window is reached (checked by window doubling).
    """
    h = t[1] - t[0]
    x = np.exp(t)
    s2 = model.vol(x) ** 2
    mu = model.drift(x)
    p = s2 / (2.0 * x**2)
    q = mu / x - s2 / (2.0 * x**2)
    n = len(t)
    lower = p / h**2 - q / (2.0 * h)
    diag = -2.0 * p / h**2 - model.beta * np.ones(n)
    upper = p / h**2 + q / (2.0 * h)

    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1, :] = diag
    ab[2, :-1] = lower[1:]
    rhs = np.zeros(n)
    # Dirichlet rows
    ab[1, 0] = 1.0
    ab[0, 1] = 0.0
    ab[1, -1] = 1.0
    ab[2, -2] = 0.0
    if which == "psi":
        rhs[0], rhs[-1] = 0.0, 1.0
    else:
        rhs[0], rhs[-1] = 1.0, 0.0
    u = solve_banded((1, 1), ab, rhs)
    resid = np.abs(lower[1:-1] * u[:-2] + diag[1:-1] * u[1:-1] + upper[1:-1] * u[2:])
    rowscale = (np.abs(lower[1:-1] * u[:-2]) + np.abs(diag[1:-1] * u[1:-1])
                + np.abs(upper[1:-1] * u[2:]) + 1e-300)
    rel = float(np.max(resid / rowscale))
    return u, rel


def _numeric_pair(model, grid, x_ref, natural_fraction, ext_factor, h_t):
    t_lo = math.log(grid[0] / ext_factor)
    t_hi = math.log(grid[-1] * ext_factor)
    # spline window: requested grid plus margin; the far ends carry the
    # (arbitrary) Dirichlet data and are never evaluated
    w_lo = math.log(grid[0]) - 3.0
    w_hi = math.log(grid[-1]) + 3.0
    res = {}
    for factor in (1.0, 4.0):
        lo = t_lo - math.log(factor)
        hi = t_hi + math.log(factor)
        m = int(math.ceil((hi - lo) / h_t)) + 1
        t = np.linspace(lo, hi, m)
        up, r_psi = _bvp_solve(model, t, "psi")
        dn, r_phi = _bvp_solve(model, t, "phi")
        win = (t >= w_lo) & (t <= w_hi)
        if np.any(up[win] <= 0) or np.any(dn[win] <= 0):
            raise ConvergenceFailureError(
                "numeric fundamental solve produced non-positive values; "
                "widen the grid or refine the model")
        sp_u = CubicSpline(t[win], np.log(up[win]))
        sp_d = CubicSpline(t[win], np.log(dn[win]))
        res[factor] = (sp_u, sp_d, max(r_psi, r_phi))

    tg = np.log(grid)
    t_ref = math.log(x_ref)
    vals = {}
    for factor, (sp_u, sp_d, r) in res.items():
        psi = np.exp(sp_u(tg) - sp_u(t_ref))
        phi = np.exp(sp_d(tg) - sp_d(t_ref))
        vals[factor] = (psi, phi)
    worst = 0.0
    for a, b in zip(vals[1.0], vals[4.0]):
        worst = max(worst, float(np.max(np.abs(a - b) / np.abs(b))))
    if worst > 1e-6:
        raise ConvergenceFailureError(
            f"fundamental solve is window-sensitive (rel {worst:.2e}); "
            "the boundary may not be natural enough for this truncation")
    psi, phi = vals[4.0]
    sp_u, sp_d, scheme_resid = res[4.0]

    def psi_fn(x):
        return np.exp(sp_u(np.log(x)) - sp_u(t_ref))

    def phi_fn(x):
        return np.exp(sp_d(np.log(x)) - sp_d(t_ref))

    def _spline_d(sp, shift):
        def d(x, order=1):
            x = np.asarray(x, dtype=float)
            tt = np.log(x)
            f = np.exp(sp(tt) - shift)
            d1 = sp(tt, 1)
            if order == 1:
                return f * d1 / x
            d2 = sp(tt, 2)
            return f * (d2 + d1 * d1 - d1) / x**2
        return d

    pair = FundamentalPair(grid, psi, phi, x_ref, psi_fn, phi_fn,
                           _spline_d(sp_u, sp_u(t_ref)), _spline_d(sp_d, sp_d(t_ref)),
                           False, scheme_resid,
                           _natural_flags(grid, psi, phi, x_ref, natural_fraction))
    return pair


def solve_fundamental(model: DiffusionModel, grid, *, x_ref: float = 1.0,
                      force_numeric: bool = False, tol_ode: float = 1e-8,
                      natural_fraction: float = 0.5, ext_factor: float = 1e6,
                      h_t: float = 1.2e-3) -> FundamentalPair:
    """Fundamental pair on ``grid``, normalized to psi = phi = 1 at x_ref.

    Closed forms are used for the gbm family unless ``force_numeric``; other
    families go through a far-extended log-space two-point boundary solve.
    The pair's own discretization residual must sit below ``tol_ode``.
    """
    grid = np.asarray(grid, dtype=float)
    if len(grid) < 3 or not np.all(np.diff(grid) > 0) or grid[0] <= 0:
        raise InvalidParameterError("grid must be strictly increasing, >= 3 points, in (0, inf)")
    if not (grid[0] <= x_ref <= grid[-1]):
        raise InvalidParameterError("normalization point must lie inside the grid")
    model.validate_on_grid(grid)
    if model.family_tag == "gbm" and not force_numeric:
        pair = _closed_form_gbm(model, grid, x_ref, natural_fraction)
    else:
        pair = _numeric_pair(model, grid, x_ref, natural_fraction, ext_factor, h_t)
    if pair.ode_residual_rel > tol_ode:
        raise ConvergenceFailureError(
            f"ODE residual {pair.ode_residual_rel:.2e} exceeds tol_ode={tol_ode}")
    return pair


def phi_integral(model: DiffusionModel, x: float, *, tail_rel: float = 1e-12,
                 cap_factor: float = 1e6) -> float:
    """Decreasing solution via the representation valid when drift = beta*x:

        phi(x) = x * int_x^inf u^-2 exp(-int_1^u 2 beta z / sigma(z)^2 dz) du

    The upper limit grows until the remaining tail (bounded by the monotone
    envelope exp(-I(U))/U) falls below ``tail_rel`` of the accumulated value.
    """
    if model.family_tag not in ("gbm", "beta_drift_general_vol"):
        raise InvalidParameterError("phi_integral requires drift(x) = beta*x")
    if x <= 0:
        raise InvalidParameterError("x must be positive")
    beta = model.beta

    def m(z):
        return 2.0 * beta * z / model.vol_spec(z) ** 2

    def inner(u):
        val, _ = quad(m, 1.0, u, epsabs=1e-13, epsrel=1e-11, limit=200)
        return val

    def f(u):
        return math.exp(-inner(u)) / u**2

    cap = cap_factor * max(x, 1.0)
    upper = max(16.0 * x, 16.0)
    acc = None
    import warnings
    from scipy.integrate import IntegrationWarning
    while True:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", IntegrationWarning)
            acc, _ = quad(f, x, upper, epsabs=1e-13, epsrel=1e-10, limit=400)
        tail = math.exp(-inner(upper)) / upper
        if tail <= tail_rel * max(acc, 1e-300):
            break
        if upper >= cap:
            raise QuadratureError(
                f"integrand tail at u={upper:.3g} still above {tail_rel} of the value")
        upper = min(upper * 4.0, cap)
    return x * acc


def generator_apply(model: DiffusionModel, g: PiecewisePolynomial, x: float) -> float:
    """(sigma^2/2) g'' + mu g' - beta g at a non-kink point, exactly."""
    x = float(x)
    if x <= 0:
        raise InvalidParameterError("x must be in (0, inf)")
    if g.is_knot(x):
        raise KinkPointError(
            f"x={x} is a kink of the payoff; treat it via its derivative jump")
    s2 = float(model.vol_spec(x)) ** 2 / 2.0
    mu = float(model.drift_spec(x))
    return s2 * g.deriv(x, +1, 2) + mu * g.deriv(x, +1, 1) - model.beta * float(g(x))
