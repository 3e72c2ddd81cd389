"""Separable smooth models psi and the composite problem f(x) = psi(Ax - b) + phi(x)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.special import expit

from .linops import LinearOperator

__all__ = [
    "SmoothModel",
    "LeastSquares",
    "Logistic",
    "StudentT",
    "CompositeProblem",
    "Evaluation",
    "f_value",
    "f_grad",
    "f_hessvec",
]


def _softplus_neg(u: np.ndarray) -> np.ndarray:
    """log(1 + exp(-u)) without overflow."""
    return np.where(u < -30.0, -u, np.log1p(np.exp(-np.maximum(u, -30.0))))


class SmoothModel:
    """A separable, twice continuously differentiable psi: R^m -> R."""

    kind = "abstract"

    def value(self, u: np.ndarray) -> float:
        raise NotImplementedError

    def grad(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hess_diag(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hess_min_eig(self, u: np.ndarray) -> float:
        # separable: the Hessian is diagonal
        return float(np.min(self.hess_diag(u)))

    def value_diff(self, u_new: np.ndarray, u_old: np.ndarray, delta=None) -> float:
        """psi(u_new) - psi(u_old), computed term by term to limit cancellation.

        ``delta`` may carry ``u_new - u_old`` formed directly (as ``A d``),
        which is more accurate than subtracting the two residuals.
        """
        return self.value(u_new) - self.value(u_old)

    def params(self) -> dict:
        return {}


class LeastSquares(SmoothModel):
    kind = "least-squares"

    def value(self, u):
        return 0.5 * float(u @ u)

    def grad(self, u):
        return np.array(u, dtype=np.float64, copy=True)

    def hess_diag(self, u):
        return np.ones_like(u, dtype=np.float64)

    def hess_min_eig(self, u):
        return 1.0

    def value_diff(self, u_new, u_old, delta=None):
        delta = u_new - u_old if delta is None else delta
        return 0.5 * float(delta @ (u_new + u_old))


class Logistic(SmoothModel):
    """psi(u) = (1/m) sum log(1 + exp(-u_i))."""

    kind = "logistic"

    def __init__(self, m: int):
        if m <= 0:
            raise ValueError("logistic model needs m > 0")
        self.m = int(m)

    def value(self, u):
        return float(np.sum(_softplus_neg(u))) / self.m

    def grad(self, u):
        return -expit(-u) / self.m

    def hess_diag(self, u):
        return expit(u) * expit(-u) / self.m

    def value_diff(self, u_new, u_old, delta=None):
        # log(1+e^{-a}) - log(1+e^{-b}) = log1p(sigmoid(-b) * expm1(b - a))
        delta = u_old - u_new if delta is None else -delta
        with np.errstate(over="ignore"):
            arg = expit(-u_old) * np.expm1(delta)
            terms = np.where(np.abs(delta) < 30.0, np.log1p(np.maximum(arg, -1.0 + 1e-300)),
                             _softplus_neg(u_new) - _softplus_neg(u_old))
        return float(np.sum(terms)) / self.m

    def params(self):
        return {"m": self.m}


class StudentT(SmoothModel):
    """psi(u) = sum log(1 + u_i^2 / nu); nonconvex for |u_i| > sqrt(nu)."""

    kind = "student-t"

    def __init__(self, nu: float):
        if not nu > 0:
            raise ValueError("student-t model needs nu > 0")
        self.nu = float(nu)

    def value(self, u):
        return float(np.sum(np.log1p(u * u / self.nu)))

    def grad(self, u):
        return 2.0 * u / (self.nu + u * u)

    def hess_diag(self, u):
        s = self.nu + u * u
        return 2.0 * (self.nu - u * u) / (s * s)

    def value_diff(self, u_new, u_old, delta=None):
        # log((nu + a^2) / (nu + b^2)) = log1p((a - b)(a + b) / (nu + b^2))
        delta = u_new - u_old if delta is None else delta
        ratio = delta * (u_new + u_old) / (self.nu + u_old * u_old)
        return float(np.sum(np.log1p(ratio)))

    def params(self):
        return {"nu": self.nu}


@dataclass(frozen=True)
class CompositeProblem:
    """F(x) = psi(Ax - b) + phi(x)."""

    smooth: SmoothModel
    A: LinearOperator
    b: np.ndarray
    reg: Any  # prox.Regularizer
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.b.shape != (self.A.rows,):
            raise ValueError(f"b has shape {self.b.shape}, operator has {self.A.rows} rows")

    @property
    def n(self) -> int:
        return self.A.cols

    def evaluate(self, x) -> "Evaluation":
        return Evaluation(self, x)

    def objective(self, x) -> float:
        ev = self.evaluate(x)
        return ev.F


class Evaluation:
    """Caller-owned cache of everything derived from one point x.

    The residual ``u = Ax - b`` is formed once; value, gradient and the
    Hessian diagonal are computed on first access.
    """

    def __init__(self, problem: CompositeProblem, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (problem.n,):
            raise ValueError(f"x has shape {x.shape}, problem has n={problem.n}")
        self.problem = problem
        self.x = x
        self.u = problem.A.apply(x) - problem.b
        self._f = None
        self._phi = None
        self._grad = None
        self._hdiag = None

    @property
    def f(self) -> float:
        if self._f is None:
            self._f = self.problem.smooth.value(self.u)
        return self._f

    @property
    def phi(self) -> float:
        if self._phi is None:
            self._phi = self.problem.reg.value(self.x)
        return self._phi

    @property
    def F(self) -> float:
        return self.f + self.phi

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            self._grad = self.problem.A.adjoint(self.problem.smooth.grad(self.u))
        return self._grad

    @property
    def hess_diag(self) -> np.ndarray:
        if self._hdiag is None:
            self._hdiag = self.problem.smooth.hess_diag(self.u)
        return self._hdiag

    def hessvec(self, v) -> np.ndarray:
        A = self.problem.A
        return A.adjoint(self.hess_diag * A.apply(v))


def f_value(p: CompositeProblem, x, cache: Evaluation | None = None) -> float:
    return (cache or p.evaluate(x)).f


def f_grad(p: CompositeProblem, x, cache: Evaluation | None = None) -> np.ndarray:
    return (cache or p.evaluate(x)).grad


def f_hessvec(p: CompositeProblem, x, v, cache: Evaluation | None = None) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (p.n,):
        raise ValueError(f"v has shape {v.shape}, problem has n={p.n}")
    return (cache or p.evaluate(x)).hessvec(v)
