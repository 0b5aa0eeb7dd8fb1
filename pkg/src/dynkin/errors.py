"""Exception types shared across the package."""


class DynkinError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(DynkinError, ValueError):
    """A model, payoff or catalog parameter is outside its admissible domain."""


class ParameterDomainError(InvalidParameterError):
    """A catalog entry was requested outside the regime its closed form covers."""


class ConvergenceFailureError(DynkinError, RuntimeError):
    """An iterative solve exhausted its budget or produced an inadmissible result."""


class QuadratureError(DynkinError, RuntimeError):
    """Adaptive quadrature could not push the integrand tail below tolerance."""


class KinkPointError(DynkinError, ValueError):
    """The generator was evaluated at a kink of a piecewise payoff."""


class MonotonicityError(DynkinError, ValueError):
    """A curve that must be strictly monotone is not."""


class InconsistentObstaclesError(DynkinError, ValueError):
    """Lower obstacle exceeds the upper obstacle somewhere."""


class SandwichViolationError(DynkinError, ValueError):
    """A value curve escapes the payoff sandwich g1 <= V <= g2."""


class OracleMismatchError(DynkinError, RuntimeError):
    """Upward and downward oracle runs did not meet within tolerance."""


class ProbeViolationError(DynkinError, RuntimeError):
    """A Monte Carlo strategy probe beat a bound it must not beat."""


class ConfigError(DynkinError, ValueError):
    """A problem configuration failed to parse or validate."""
