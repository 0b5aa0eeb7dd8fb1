"""Cross-module runs on families without closed-form fundamental pairs."""
import numpy as np
import pytest

from dynkin import make_model, parse_config, run_simulate, run_solve
from dynkin.pipeline import self_check

from conftest import solve_game


def test_game_call_value_is_vol_free_for_beta_drift():
    # with drift beta*x the capped-claim value eps*x/K below the strike and
    # x - K + eps above holds for any volatility profile; solving with a
    # non-constant relative vol exercises the numeric fundamental path end
    # to end against the same closed form
    from dynkin import PayoffPair, PiecewisePolynomial
    m = make_model("beta_drift_general_vol", beta=0.05, vol_coeffs=(1.0, 0.2))
    K, eps = 8.0, 1.0
    g1 = PiecewisePolynomial.call(K)
    pay = PayoffPair(g1, g1.shifted(eps))
    s = solve_game(m, pay, 0.5, 128.0, 2001, x_ref=1.0)
    grid, V = s["grid"], s["V"].values
    closed = np.where(grid <= K, eps * grid / K, grid - K + eps)
    mask = (grid >= 2.0) & (grid <= 32.0)
    floor = 1e-6 * np.max(closed)
    rel = np.max(np.abs(V - closed)[mask] / np.maximum(closed[mask], floor))
    assert rel <= 1e-3


def test_full_config_run_beta_drift(tmp_path):
    text = """
[model]
family = beta_drift_general_vol
beta = 0.05
vol_coeffs = 1.0, 0.2

[payoff]
g1_piece = (0, 8, 0, 0, 0, 0)
g1_piece = (8, inf, -8, 1, 0, 0)
g2_piece = (0, 8, 1, 0, 0, 0)
g2_piece = (8, inf, -7, 1, 0, 0)

[grid]
x_min = 0.5
x_max = 128
n_points = 501
x_ref = 1.0

[mc]
enabled = true
n_paths = 400
dt = 0.01
horizon = 20
seed = 5
x0 = 4.0

[output]
csv = s.csv
json = r.json
plot_data = plot.csv
"""
    cfg = parse_config(text)
    cfg.output["dir"] = str(tmp_path)
    sol = run_solve(cfg)
    assert self_check(sol) == []
    sol = run_simulate(cfg, sol)
    assert sol.mc["enabled"]
    # the Euler kernel with the positivity guard drives the estimate
    assert sol.mc["value_estimate"]["mean"] > 0
    assert (tmp_path / "plot.csv").read_text().splitlines()[0] == \
        "x,g1,g2,V,W_of_Fx,in_E1,in_E2"


def test_custom_family_smoke():
    # gbm-like custom model whose drift rate differs from the discount rate;
    # no closed form is asserted, only the structural invariants
    from dynkin import PayoffPair, PiecewisePolynomial
    m = make_model("custom", beta=0.05, drift_coeffs=(0.0, 0.04),
                   vol_coeffs=(0.0, 0.25))
    K = 4.0
    g1 = PiecewisePolynomial.call(K)
    pay = PayoffPair(g1, g1.scaled(1.5))
    s = solve_game(m, pay, 0.25, 64.0, 801, x_ref=1.0)
    g1v, g2v = pay.values_on(s["grid"])
    V = s["V"].values
    sc = 1.0 + np.abs(g2v)
    assert np.all(V >= g1v - 1e-9 * sc)
    assert np.all(V <= g2v + 1e-9 * sc)
    assert s["envelope"].converged
    # positive drift below the discount rate still prices the claim above
    # its intrinsic value somewhere
    assert np.any(V > g1v + 1e-6)
