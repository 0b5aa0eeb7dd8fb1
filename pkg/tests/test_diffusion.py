import numpy as np
import pytest

from dynkin import (InvalidParameterError, KinkPointError,
                    PiecewisePolynomial, generator_apply, log_grid,
                    make_model, phi_integral, solve_fundamental)

GAMMA = 10.0 / 9.0  # 2 beta / sigma^2 for beta=0.05, sigma=0.3


def test_make_model_gbm():
    m = make_model("gbm", beta=0.05, sigma=0.3)
    x = np.array([1.0, 3.0])
    assert np.allclose(m.drift(x), 0.05 * x)
    assert np.allclose(m.vol(x), 0.3 * x)


def test_make_model_rejects_degenerate_vol():
    with pytest.raises(InvalidParameterError):
        make_model("gbm", beta=0.05, sigma=0.0)
    with pytest.raises(InvalidParameterError):
        make_model("gbm", beta=-0.1, sigma=0.3)


def test_make_model_beta_drift_family():
    m = make_model("beta_drift_general_vol", beta=0.05, vol_coeffs=(1.0, 0.2))
    x = np.array([1.0, 5.0])
    assert np.allclose(m.drift(x), 0.05 * x)
    assert np.allclose(m.vol(x), 1.0 + 0.2 * x)


def test_gbm_closed_forms():
    m = make_model("gbm", beta=0.05, sigma=0.3)
    g = log_grid(1 / 16, 16.0, 501, insert=[1.0])
    p = solve_fundamental(m, g, x_ref=1.0)
    assert np.allclose(p.psi, g, rtol=1e-14)
    assert np.allclose(p.phi, g ** (-GAMMA), rtol=1e-13)
    assert np.all(np.diff(p.F) > 0)


def test_fundamental_invariants_and_flags():
    m = make_model("gbm", beta=0.05, sigma=0.3)
    g = log_grid(0.1, 10.0, 301, insert=[1.0])
    p = solve_fundamental(m, g, x_ref=1.0)
    assert np.all(p.psi > 0) and np.all(p.phi > 0)
    assert np.all(np.diff(p.psi) > 0)
    assert np.all(np.diff(p.phi) < 0)
    assert p.natural_decay["psi_left_decay"]
    assert p.natural_decay["phi_right_decay"]
    assert p.ode_residual_rel <= 1e-8


def test_numeric_matches_closed_form_to_1e6():
    m = make_model("gbm", beta=0.05, sigma=0.3)
    g = log_grid(1 / 16, 16.0, 801, insert=[1.0])
    p = solve_fundamental(m, g, x_ref=1.0, force_numeric=True)
    assert np.max(np.abs(p.psi - g) / g) <= 1e-6
    assert np.max(np.abs(p.phi - g ** (-GAMMA)) / g ** (-GAMMA)) <= 1e-6


def test_normalization_point_is_exact():
    m = make_model("gbm", beta=0.05, sigma=0.3)
    g = log_grid(0.5, 8.0, 201, insert=[2.0])
    p = solve_fundamental(m, g, x_ref=2.0)
    i = int(np.argmin(np.abs(g - 2.0)))
    assert p.psi[i] == pytest.approx(1.0, abs=1e-14)
    assert p.phi[i] == pytest.approx(1.0, abs=1e-14)


def test_phi_integral_closed_value():
    # for constant relative volatility the integral reduces to
    # x^(-gamma) / (1 + gamma); at x = 1 that is 9/19
    m = make_model("gbm", beta=0.05, sigma=0.3)
    assert phi_integral(m, 1.0) == pytest.approx(9.0 / 19.0, abs=1e-8)


def test_phi_integral_power_ratios():
    m = make_model("gbm", beta=0.05, sigma=0.3)
    base = phi_integral(m, 1.0)
    for x in (0.5, 2.0, 4.0):
        ratio = phi_integral(m, x) / base
        assert ratio == pytest.approx(x ** (-GAMMA), rel=1e-8)


def test_phi_integral_strictly_decreasing():
    m = make_model("beta_drift_general_vol", beta=0.05, vol_coeffs=(1.0, 0.2))
    vals = [phi_integral(m, x) for x in (0.5, 1.5, 4.0)]
    assert vals[0] > vals[1] > vals[2] > 0


def test_phi_integral_requires_beta_drift():
    m = make_model("custom", beta=0.05, drift_coeffs=(0.1,), vol_coeffs=(0.0, 0.3))
    with pytest.raises(InvalidParameterError):
        phi_integral(m, 1.0)


def test_numeric_phi_matches_quadrature_oracle():
    # independent quadrature of the decreasing solution as the oracle
    m = make_model("beta_drift_general_vol", beta=0.05, vol_coeffs=(1.0, 0.2))
    g = log_grid(0.5, 8.0, 301, insert=[1.0])
    p = solve_fundamental(m, g, x_ref=1.0)
    xs = g[::60]
    oracle = np.array([phi_integral(m, float(x)) for x in xs])
    oracle /= phi_integral(m, 1.0)
    assert np.max(np.abs(p.phi_fn(xs) - oracle) / oracle) <= 1e-5


def test_psi_is_identity_for_beta_drift():
    # drift beta*x makes the identity a solution of the homogeneous equation
    m = make_model("beta_drift_general_vol", beta=0.05, vol_coeffs=(1.0, 0.2))
    g = log_grid(0.5, 8.0, 301, insert=[1.0])
    p = solve_fundamental(m, g, x_ref=1.0)
    assert np.max(np.abs(p.psi - g) / g) <= 1e-5


def test_generator_on_call_payoff():
    # L(x - K) = beta*K above the strike when drift = beta*x
    m = make_model("gbm", beta=0.05, sigma=0.3)
    g = PiecewisePolynomial.call(100.0)
    assert generator_apply(m, g, 150.0) == pytest.approx(5.0, rel=1e-14)
    assert generator_apply(m, g, 50.0) == pytest.approx(0.0, abs=1e-14)


def test_generator_annihilates_psi_and_constants():
    m = make_model("gbm", beta=0.05, sigma=0.3)
    psi = PiecewisePolynomial.linear(0.0, 1.0)
    for x in (0.3, 1.0, 7.0):
        assert generator_apply(m, psi, x) == pytest.approx(0.0, abs=1e-14)
    const = PiecewisePolynomial.constant(3.0)
    assert generator_apply(m, const, 2.0) == pytest.approx(-0.05 * 3.0, rel=1e-14)


def test_generator_rejects_kink_points():
    m = make_model("gbm", beta=0.05, sigma=0.3)
    g = PiecewisePolynomial.call(100.0)
    with pytest.raises(KinkPointError):
        generator_apply(m, g, 100.0)


def test_analytic_residual_for_closed_forms():
    m = make_model("gbm", beta=0.05, sigma=0.3)
    g = log_grid(1 / 16, 16.0, 201, insert=[1.0])
    p = solve_fundamental(m, g, x_ref=1.0)
    x = g[1:-1]
    for f, d in ((p.psi_fn, p.psi_d), (p.phi_fn, p.phi_d)):
        res = 0.5 * m.vol(x) ** 2 * d(x, 2) + m.drift(x) * d(x, 1) - m.beta * f(x)
        assert np.max(np.abs(res)) <= 1e-8 * np.max(np.abs(f(x)))


def test_rescaled_pair_keeps_invariants():
    m = make_model("gbm", beta=0.05, sigma=0.3)
    g = log_grid(0.5, 2.0, 101, insert=[1.0])
    p = solve_fundamental(m, g, x_ref=1.0)
    q = p.rescaled(1e3, 1e-3)
    assert np.allclose(q.psi, 1e3 * p.psi)
    assert np.all(np.diff(q.F) > 0)
    with pytest.raises(InvalidParameterError):
        p.rescaled(-1.0, 1.0)


def test_grid_validation():
    m = make_model("gbm", beta=0.05, sigma=0.3)
    with pytest.raises(InvalidParameterError):
        solve_fundamental(m, np.array([1.0, 2.0]), x_ref=1.5)
    with pytest.raises(InvalidParameterError):
        solve_fundamental(m, np.array([1.0, 2.0, 3.0]), x_ref=9.0)
