import numpy as np
import pytest

from dynkin import GridCurve, InvalidParameterError, MonotonicityError, log_grid, trend_limit


def test_log_grid_inserts_exact_nodes():
    g = log_grid(6.25, 1600.0, 101, insert=[100.0, 50.0])
    assert np.all(np.diff(g) > 0)
    assert 100.0 in g and 50.0 in g
    assert g[0] == 6.25 and g[-1] == 1600.0


def test_log_grid_rejects_bad_bounds():
    with pytest.raises(InvalidParameterError):
        log_grid(-1.0, 2.0, 11)
    with pytest.raises(InvalidParameterError):
        log_grid(2.0, 1.0, 11)


def test_grid_curve_validation():
    with pytest.raises(MonotonicityError):
        GridCurve(np.array([1.0, 1.0, 2.0]), np.zeros(3))
    with pytest.raises(InvalidParameterError):
        GridCurve(np.array([1.0, 2.0]), np.array([np.nan, 0.0]))
    c = GridCurve(np.array([1.0, 2.0, 4.0]), np.array([0.0, 1.0, 3.0]))
    assert c(2.0) == 1.0
    assert c(3.0) == 2.0  # linear interpolation between nodes


def test_trend_limit_geometric_sequence_is_exact():
    # v_k = L - c q^k: Aitken recovers L to machine precision
    q = 0.8
    ks = np.arange(10)
    v = 3.7 - 1.1 * q**ks
    est = trend_limit(v)
    assert est.tag == "converged"
    assert abs(est.value - 3.7) < 1e-10
    assert est.spread < 1e-8


def test_trend_limit_zero_and_flat():
    z = trend_limit(np.zeros(8))
    assert z.tag == "converged" and z.value == 0.0 and z.is_zero
    f = trend_limit(np.full(8, 2.5))
    assert f.tag == "converged" and abs(f.value - 2.5) < 1e-12


def test_trend_limit_diverging_and_oscillating():
    d = trend_limit(np.exp(np.arange(8)))
    assert d.tag == "diverging" and d.value == np.inf
    o = trend_limit(np.array([1.0, -1.0, 1.0, -1.0, 1.0, -1.0]))
    assert o.tag == "oscillating"
