"""Deterministic epsilon-global solver for sparse mixed-membership matrix factorization."""
from .core import (ContractViolation, FactorPair, ProblemInstance, SolverConfig,
                   UnsupportedSizeError, check_feasible, generate_instance, objective)
from .gop import SolveReport, run

__all__ = [
    "ContractViolation", "FactorPair", "ProblemInstance", "SolverConfig", "SolveReport",
    "UnsupportedSizeError", "check_feasible", "generate_instance", "objective", "run",
]
__version__ = "0.1.0"
