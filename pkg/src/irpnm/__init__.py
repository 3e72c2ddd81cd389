"""Inexact regularized proximal Newton method for F(x) = psi(Ax - b) + phi(x)."""

from .prox import Regularizer, residual
from .smooth import CompositeProblem, LeastSquares, Logistic, StudentT
from .solver import AlgoParams, FistaParams, RunResult, run, run_fista_baseline

__all__ = [
    "AlgoParams",
    "CompositeProblem",
    "FistaParams",
    "LeastSquares",
    "Logistic",
    "Regularizer",
    "RunResult",
    "StudentT",
    "residual",
    "run",
    "run_fista_baseline",
]
__version__ = "0.1.0"
