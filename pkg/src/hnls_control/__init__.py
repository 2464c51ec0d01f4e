"""Boundary control of the higher-order nonlinear Schrodinger equation on an interval.

Discretisation, forward and adjoint solvers, the Hilbert uniqueness
method for the linear problem, Picard iteration for the nonlinear one,
norms and inequality checks, and a command-line runner.
"""
from .core import (ComplexField, EquationParams, GridSpec, SpaceTimeField, TimeSeries,
                   build_operator, inner_product, norms)
from .errors import (BallEscape, ConfigError, Divergence, HNLSError, MaxIter,
                     NonConvergence)
from .problem import ControlProblem

__version__ = "0.1.0"

__all__ = [
    "BallEscape", "ComplexField", "ConfigError", "ControlProblem", "Divergence",
    "EquationParams", "GridSpec", "HNLSError", "MaxIter", "NonConvergence",
    "SpaceTimeField", "TimeSeries", "build_operator", "inner_product", "norms",
]
