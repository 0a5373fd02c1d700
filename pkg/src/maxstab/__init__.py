"""Anisotropic space-time Brown-Resnick processes on regular grids.

Simulation, Gumbel margins, pairwise likelihood fitting, a subsampling
isotropy test and max-stability diagnostics.
"""

__version__ = "0.1.0"

from ._errors import (
    ConfigError,
    ConvergenceError,
    DataError,
    DecompositionError,
    DegenerateLagError,
    DomainError,
    IdentifiabilityError,
    MaxstabError,
    NumericError,
    SaturationError,
)
from .cube import ObsCube, read_cube, write_cube
from .dependence import DepParams, chi, delta, exponent_v, extremal_coefficient
from .likelihood import DesignMask, FitResult, fit_pmle, pl_objective, separated_fit
from .simulate import SimConfig, simulate_br, simulate_cube

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "DataError",
    "DecompositionError",
    "DegenerateLagError",
    "DepParams",
    "DesignMask",
    "DomainError",
    "FitResult",
    "IdentifiabilityError",
    "MaxstabError",
    "NumericError",
    "ObsCube",
    "SaturationError",
    "SimConfig",
    "chi",
    "delta",
    "exponent_v",
    "extremal_coefficient",
    "fit_pmle",
    "pl_objective",
    "read_cube",
    "separated_fit",
    "simulate_br",
    "simulate_cube",
    "write_cube",
]
