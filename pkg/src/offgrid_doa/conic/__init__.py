"""Second-order cone programming: modelling container and interior-point solver."""

from .ipm import (DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE, INFEASIBLE, MAX_ITERATIONS,
                  NUMERICAL_FAILURE, OPTIMAL, SolverResult, solve)
from .program import ConicProgram, ProgramError, StandardForm

__all__ = [
    "ConicProgram", "ProgramError", "StandardForm", "SolverResult", "solve",
    "OPTIMAL", "MAX_ITERATIONS", "INFEASIBLE", "NUMERICAL_FAILURE",
    "DEFAULT_TOLERANCE", "DEFAULT_MAX_ITERATIONS",
]
