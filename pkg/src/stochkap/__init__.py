"""Stochastic coupled heat/neutronics with polynomial chaos and dimension reduction."""

from .driver import (
    MCResult,
    PCResult,
    SolverSettings,
    cross_compare,
    run_monte_carlo,
    run_pc_solver,
    variance_decomposition,
)
from .errors import (
    ConfigurationError,
    ConvergenceError,
    ModelValidityError,
    NumericalError,
    StochkapError,
    UsageError,
)
from .randomfield import FieldSpec, kl_decompose
from .reactor import ReactorConfig, ReactorModel

__all__ = [
    "ConfigurationError",
    "ConvergenceError",
    "FieldSpec",
    "MCResult",
    "ModelValidityError",
    "NumericalError",
    "PCResult",
    "ReactorConfig",
    "ReactorModel",
    "SolverSettings",
    "StochkapError",
    "UsageError",
    "cross_compare",
    "kl_decompose",
    "run_monte_carlo",
    "run_pc_solver",
    "variance_decomposition",
]

__version__ = "0.1.0"
