"""Finite-difference solvers of the reduced HJB equations."""

from .base_solver import BaseSolver, SolveRecord, SolveStatus
from .exponential_solver import ExponentialSolver, ValueCurve
from .grids import TimeGrid, ZGrid
from .weibull_solver import ValueSurface, WeibullSolver

__all__ = [
    "BaseSolver",
    "SolveRecord",
    "SolveStatus",
    "ExponentialSolver",
    "ValueCurve",
    "TimeGrid",
    "ZGrid",
    "ValueSurface",
    "WeibullSolver",
]
