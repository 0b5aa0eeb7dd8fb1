"""Perpetual optimal stopping games on one-dimensional diffusions.

The library computes the value function, optimal stopping regions and
saddle-point diagnostics of two-player perpetual stopping games, verifies
results against closed forms and a discrete-chain oracle, and probes the
optimality structure by Monte Carlo playout.
"""

__version__ = "0.1.0"

from .errors import (ConfigError, ConvergenceFailureError, DynkinError,
                     InconsistentObstaclesError, InvalidParameterError,
                     KinkPointError, MonotonicityError, OracleMismatchError,
                     ParameterDomainError, ProbeViolationError,
                     QuadratureError, SandwichViolationError)
from .grids import GridCurve, TrendEstimate, log_grid, trend_limit
from .payoffs import PayoffPair, PiecewisePolynomial
from .diffusion import (DiffusionModel, FundamentalPair, generator_apply,
                        make_model, phi_integral, solve_fundamental)
from .transform import (Transform, TransformedObstacles, build_transform,
                        transform_obstacles, untransform_value)
from .envelope import (EnvelopeSolution, EnvelopeTolerances, american_value,
                       greatest_convex_minorant, least_concave_majorant,
                       smallest_in_H)
from .analysis import (MeasureSignReport, SaddleVerdict, SmoothFitReport,
                       StoppingRegions, boundary_growth, classify_saddle,
                       extract_regions, generator_measure_sign,
                       smooth_fit_check)
from .simulate import (ChainProblem, GameEstimate, Strategy,
                       chain_dynkin_oracle, estimate_R, play_game,
                       saddle_probe, simulate_path)
from .catalog import CatalogEntry, catalog_names, game_call, get_entry, scaled_call
from .config import ProblemConfig, load_config, parse_config
from .pipeline import GameSolution, emit_outputs, run_simulate, run_solve

__all__ = [name for name in dir() if not name.startswith("_")]
