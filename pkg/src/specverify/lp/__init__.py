from .kernels import BACKENDS, DEFAULT_BACKEND
from .solver import LinearProgram, LpSolution, LpStatus, solve

__all__ = ["BACKENDS", "DEFAULT_BACKEND", "LinearProgram", "LpSolution", "LpStatus", "solve"]
