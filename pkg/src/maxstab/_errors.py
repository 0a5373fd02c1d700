"""Exception hierarchy and the frozen CLI exit-code map."""


class MaxstabError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class DataError(MaxstabError, ValueError):
    """Malformed, incomplete or out-of-support input data."""

    exit_code = 3


class DomainError(DataError):
    """Argument outside the domain of a closed-form quantity."""


class DegenerateLagError(DomainError):
    """Bivariate quantity requested at the zero lag (or a vanishing dependence value)."""


class SaturationError(DataError):
    """A Gumbel CDF evaluated to exactly 0 or 1 in double precision."""


class NumericError(MaxstabError, ArithmeticError):
    """Numerical failure: factorisation, non-convergence, too many dropped fits."""

    exit_code = 4


class DecompositionError(NumericError):
    """Covariance matrix not positive semidefinite after jitter escalation."""


class ConvergenceError(NumericError):
    """Iterative solver did not converge."""


class ConfigError(MaxstabError, ValueError):
    """Infeasible configuration (bounds, caps, identifiability)."""

    exit_code = 5


class IdentifiabilityError(ConfigError):
    """Every parameter is frozen by the design mask."""


EXIT_OK = 0
EXIT_USAGE = 2
