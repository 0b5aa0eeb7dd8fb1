import math

import numpy as np
import pytest

from dynkin import ParameterDomainError, game_call, get_entry, scaled_call
from dynkin.catalog import catalog_names


def test_game_call_spot_values():
    e = game_call(100.0, 5.0)
    xs = np.array([50.0, 100.0, 150.0])
    assert np.allclose(e.value_fn(xs), [2.5, 5.0, 55.0], rtol=1e-14)


def test_game_call_linear_in_eps_below_strike():
    a = game_call(100.0, 1.0)
    b = game_call(100.0, 4.0)
    xs = np.geomspace(10.0, 99.0, 11)
    assert np.allclose(b.value_fn(xs), 4.0 * a.value_fn(xs), rtol=1e-13)


def test_game_call_continuity_at_strike():
    e = game_call(100.0, 5.0)
    left = float(e.value_fn(np.asarray(100.0 - 1e-10)))
    right = float(e.value_fn(np.asarray(100.0 + 1e-10)))
    assert left == pytest.approx(5.0, abs=1e-8)
    assert right == pytest.approx(5.0, abs=1e-8)


def test_game_call_rejects_large_fee():
    with pytest.raises(ParameterDomainError):
        game_call(100.0, 100.0)
    with pytest.raises(ParameterDomainError):
        game_call(100.0, 150.0)
    with pytest.raises(ParameterDomainError):
        game_call(100.0, 0.0)


def test_game_call_expected_regions():
    e = game_call(100.0, 5.0)
    assert e.expected_E1 == ()
    assert e.expected_E2 == ((100.0, math.inf),)
    assert e.expected_verdict == "seller-only"


def test_scaled_call_case_split():
    # threshold 1 + 2 beta / sigma^2 = 19/9 for beta=0.05, sigma=0.3
    c1 = scaled_call(1.0, 3.0, 0.05, 0.3)
    assert c1.params["case"] == 1
    c2 = scaled_call(100.0, 2.0, 0.05, 0.3)
    assert c2.params["case"] == 2
    with pytest.raises(ParameterDomainError):
        scaled_call(100.0, 1.0, 0.05, 0.3)


def test_scaled_call_case1_values():
    e = scaled_call(1.0, 3.0, 0.05, 0.3)
    assert float(e.value_fn(np.asarray(1.0))) == pytest.approx(0.0, abs=1e-14)
    v2 = 2.0 - 2.0 ** (-10.0 / 9.0)
    assert float(e.value_fn(np.asarray(2.0))) == pytest.approx(v2, rel=1e-14)
    assert v2 == pytest.approx(1.5371, abs=1e-4)


def test_scaled_call_case2_values():
    e = scaled_call(100.0, 2.0, 0.05, 0.3)
    xp = e.params["x_prime"]
    assert xp == pytest.approx(20.0 / 0.19, rel=1e-15)
    assert float(e.value_fn(np.asarray(xp))) == pytest.approx(2.0 * (xp - 100.0), rel=1e-12)
    A = e.params["tail_coeff"]
    v200 = 200.0 - A * (xp / 200.0) ** (10.0 / 9.0)
    assert float(e.value_fn(np.asarray(200.0))) == pytest.approx(v200, rel=1e-15)
    assert v200 == pytest.approx(153.57, abs=5e-3)


def test_scaled_call_case2_smooth_fit_analytic():
    # both one-sided slopes of the closed form at x' equal C
    e = scaled_call(100.0, 2.0, 0.05, 0.3)
    xp = e.params["x_prime"]
    h = 1e-7 * xp
    left = (e.value_fn(np.asarray(xp)) - e.value_fn(np.asarray(xp - h))) / h
    right = (e.value_fn(np.asarray(xp + h)) - e.value_fn(np.asarray(xp))) / h
    assert left == pytest.approx(2.0, abs=1e-6)
    assert right == pytest.approx(2.0, abs=1e-6)


def test_scaled_call_case2_convexity_loss():
    # convex below x', strictly concave beyond: the second difference of the
    # value changes sign across the free boundary although both payoffs are
    # convex
    e = scaled_call(100.0, 2.0, 0.05, 0.3)
    xp = e.params["x_prime"]
    xs = np.linspace(xp / 2, xp * 3, 4001)
    v = e.value_fn(xs)
    d2 = np.diff(v, 2)
    below = xs[1:-1] < xp * 0.999
    above = xs[1:-1] > xp * 1.001
    assert np.all(d2[below] >= -1e-10)
    assert np.all(d2[above] < 0)
    # analytic second derivative on the tail branch is negative
    A = e.params["tail_coeff"]
    gamma = 10.0 / 9.0
    x = xs[1:-1][above]
    d2_analytic = -A * gamma * (gamma + 1.0) * xp**gamma * x ** (-gamma - 2.0)
    assert np.all(d2_analytic < 0)


def test_catalog_sandwich_holds():
    for e in (game_call(100.0, 5.0), scaled_call(1.0, 3.0, 0.05, 0.3),
              scaled_call(100.0, 2.0, 0.05, 0.3)):
        xs = np.geomspace(e.params["K"] / 20, e.params["K"] * 20, 501)
        v = e.value_fn(xs)
        g1 = e.payoffs.g1(xs)
        g2 = e.payoffs.g2(xs)
        sc = 1.0 + np.abs(g2)
        assert np.all(v >= g1 - 1e-9 * sc)
        assert np.all(v <= g2 + 1e-9 * sc)


def test_registry():
    assert catalog_names() == ["game_call", "scaled_call"]
    e = get_entry("game_call", {"K": 50.0, "eps": 2.0})
    assert e.params["K"] == 50.0
    with pytest.raises(Exception):
        get_entry("straddle", {})
