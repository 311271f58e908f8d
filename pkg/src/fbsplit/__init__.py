"""Forward-backward splitting solvers, proximal operators and test problems."""

from .engine import (Continuation, SolveResult, SolverOptions, SolveTrace, continuation_solve,
                     solve)
from .problems import CompositeProblem, benchmark_instance, generate

__version__ = "0.1.0"

__all__ = ["Continuation", "SolveResult", "SolverOptions", "SolveTrace", "continuation_solve",
           "solve", "CompositeProblem", "benchmark_instance", "generate"]
