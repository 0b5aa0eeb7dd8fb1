import math

import numpy as np
import pytest

from dynkin import (PayoffPair, PiecewisePolynomial, build_transform,
                    make_model, smallest_in_H, solve_fundamental,
                    transform_obstacles, untransform_value)
from dynkin import _kernels


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    _kernels.warmup()


def solve_game(model, payoffs, x_min, x_max, n_points, inserts=(),
               x_ref=None, boundary="natural", force_numeric=False):
    """Full solve used by many tests: model -> transform -> envelope -> V."""
    from dynkin import log_grid
    kinks = [k for k in payoffs.kinks if x_min < k < x_max]
    grid = log_grid(x_min, x_max, n_points, insert=[*kinks, *inserts])
    if x_ref is None:
        x_ref = 1.0 if grid[0] <= 1.0 <= grid[-1] else math.sqrt(x_min * x_max)
    fund = solve_fundamental(model, grid, x_ref=x_ref, force_numeric=force_numeric)
    trf = build_transform(fund)
    obs = transform_obstacles(payoffs, trf, fund)
    sol = smallest_in_H(obs, boundary=boundary)
    V = untransform_value(sol.W, trf, fund)
    return {"grid": grid, "fund": fund, "transform": trf, "obstacles": obs,
            "envelope": sol, "V": V, "model": model, "payoffs": payoffs}


@pytest.fixture(scope="session")
def gbm_model():
    return make_model("gbm", beta=0.05, sigma=0.3)


@pytest.fixture(scope="session")
def game_call_solution(gbm_model):
    K, eps = 100.0, 5.0
    g1 = PiecewisePolynomial.call(K)
    payoffs = PayoffPair(g1, g1.shifted(eps))
    out = solve_game(gbm_model, payoffs, 6.25, 1600.0, 4001, inserts=[50.0, 150.0])
    out["K"], out["eps"] = K, eps
    return out


@pytest.fixture(scope="session")
def case2_solution(gbm_model):
    K, C = 100.0, 2.0
    g1 = PiecewisePolynomial.call(K)
    payoffs = PayoffPair(g1, g1.scaled(C))
    out = solve_game(gbm_model, payoffs, 6.25, 1600.0, 4001)
    out["K"], out["C"] = K, C
    return out


@pytest.fixture(scope="session")
def case1_solution(gbm_model):
    K, C = 1.0, 3.0
    g1 = PiecewisePolynomial.call(K)
    payoffs = PayoffPair(g1, g1.scaled(C))
    out = solve_game(gbm_model, payoffs, 1.0 / 16.0, 16.0, 4001)
    out["K"], out["C"] = K, C
    return out


def random_obstacle_problem(rng, n_lo=51, n_hi=201):
    """Random piecewise-linear obstacle pair on a random strictly increasing grid."""
    n = int(rng.integers(n_lo, n_hi + 1))
    y = np.cumsum(rng.uniform(0.05, 1.0, size=n))
    knots = np.sort(rng.choice(np.arange(n), size=min(n, 6), replace=False))
    base = np.interp(np.arange(n), knots, rng.uniform(0.0, 1.0, size=len(knots)))
    gap_knots = np.sort(rng.choice(np.arange(n), size=min(n, 5), replace=False))
    gap = np.interp(np.arange(n), gap_knots, rng.uniform(0.0, 1.0, size=len(gap_knots)))
    if rng.uniform() < 0.3:
        gap[rng.integers(0, n)] = 0.0  # occasional pinch H1 == H2
    H1 = np.maximum(base, 0.0)
    H2 = H1 + np.maximum(gap, 0.0)
    return y, H1, H2
