"""Inexact solver for the strongly convex regularized Newton subproblem

    min_x  qhat(x) = f(x_k) + g^T (x - x_k) + 1/2 (x - x_k)^T G (x - x_k) + phi(x),

with G = H + mu I, H positive semidefinite. The solve stops at the first
iterate satisfying both halves of the inexactness test.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .prox import Regularizer, subproblem_residual

__all__ = [
    "SubproblemContext",
    "SubproblemResult",
    "solve_subproblem",
    "qhat_value",
    "q_value",
    "criterion_target",
]

Matvec = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SubproblemContext:
    x_k: np.ndarray
    grad_k: np.ndarray
    hess_vec: Matvec          # d -> H_k d, H_k = hess f(x_k) + Lambda_k A^T A
    mu_k: float
    G_norm_estimate: float
    reg: Regularizer
    F_k: float
    phi_k: float
    r_k_norm: float
    hess_f_vec: Matvec | None = None   # d -> hess f(x_k) d; defaults to hess_vec

    def __post_init__(self):
        if not self.mu_k > 0:
            raise ValueError(f"mu_k must be positive, got {self.mu_k}")

    def G(self, d: np.ndarray) -> np.ndarray:
        return self.hess_vec(d) + self.mu_k * d

    def model_change(self, x, Gd=None) -> float:
        """qhat(x) - F(x_k), formed without the f(x_k) cancellation."""
        d = x - self.x_k
        if Gd is None:
            Gd = self.G(d)
        return float(self.grad_k @ d + 0.5 * (d @ Gd)) + self.reg.value_diff(x, self.x_k)


@dataclass
class SubproblemResult:
    x_hat: np.ndarray
    inner_iters: int
    Rk_norm: float
    qhat_value: float
    decrease_ok: bool
    status: str               # "accepted" | "max-iters"
    lipschitz: float          # step constant actually used (upper-bounds ||G|| along the path)

    @property
    def accepted(self) -> bool:
        return self.status == "accepted"


def qhat_value(ctx: SubproblemContext, x) -> float:
    return ctx.F_k + ctx.model_change(np.asarray(x, dtype=np.float64))


def q_value(ctx: SubproblemContext, x) -> float:
    """Unregularized model: same as qhat but with hess f(x_k) in place of G_k."""
    x = np.asarray(x, dtype=np.float64)
    d = x - ctx.x_k
    hf = ctx.hess_f_vec or ctx.hess_vec
    return (ctx.F_k + float(ctx.grad_k @ d + 0.5 * (d @ hf(d)))
            + ctx.reg.value_diff(x, ctx.x_k))


def criterion_target(r_norm: float, theta: float, tau: float) -> float:
    return theta * min(r_norm, r_norm ** (1.0 + tau))


def solve_subproblem(ctx: SubproblemContext, theta: float, tau: float, alpha: float,
                     max_iter: int = 10_000, forcing: float = 1.0) -> SubproblemResult:
    """Accelerated proximal gradient on qhat, warm-started at x_k.

    Momentum is the FISTA sequence capped by the strong-convexity value
    (sqrt(L) - sqrt(mu)) / (sqrt(L) + sqrt(mu)); a step that raises qhat
    resets the momentum and is discarded (monotone variant). The step
    constant starts at 1.01 * G_norm_estimate and doubles whenever the
    quadratic upper bound fails along the step, so an underestimate of
    ||G|| cannot cause divergence.
    """
    mu = ctx.mu_k
    L = max(ctx.G_norm_estimate, mu) * 1.01
    target = min(criterion_target(ctx.r_k_norm, theta, tau), forcing * ctx.r_k_norm)
    xk = ctx.x_k
    g = ctx.grad_k

    x = xk.copy()
    Gd_x = np.zeros_like(xk)
    obj_x = 0.0                 # qhat(x) - F_k
    y, Gd_y = x, Gd_x
    t = 1.0
    best = None

    for it in range(1, max_iter + 1):
        grad_y = g + Gd_y
        while True:
            x_new = ctx.reg.prox(y - grad_y / L, 1.0 / L)
            d_new = x_new - xk
            Gd_new = ctx.G(d_new)
            e = x_new - y
            Ge = Gd_new - Gd_y
            ee = float(e @ e)
            # Ge is a difference of two products: allow for its rounding error
            slack = 1e-12 * np.sqrt(ee) * (np.linalg.norm(Gd_new) + np.linalg.norm(Gd_y))
            if float(e @ Ge) <= L * ee * (1.0 + 1e-12) + slack or ee == 0.0:
                break
            L *= 2.0
        obj_new = ctx.model_change(x_new, Gd_new)
        Rk = subproblem_residual(ctx, x_new, Gd=Gd_new)
        Rk_norm = float(np.linalg.norm(Rk))
        decrease_ok = -obj_new >= 0.5 * alpha * mu * float(d_new @ d_new)
        if Rk_norm <= target and decrease_ok:
            return SubproblemResult(x_new, it, Rk_norm, ctx.F_k + obj_new, True, "accepted", L)
        if best is None or Rk_norm < best[1]:
            best = (x_new, Rk_norm, obj_new, decrease_ok)

        # a plain prox-gradient step (y == x) descends in exact arithmetic; accepting
        # it keeps the loop from re-rejecting the same point on rounding noise
        if obj_new > obj_x and y is not x:
            # restart from the current (better) point with a plain prox-gradient step
            t = 1.0
            y, Gd_y = x, Gd_x
            continue
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        beta_sc = (np.sqrt(L) - np.sqrt(mu)) / (np.sqrt(L) + np.sqrt(mu))
        beta = min((t - 1.0) / t_new, beta_sc)
        y = x_new + beta * (x_new - x)
        Gd_y = Gd_new + beta * (Gd_new - Gd_x)
        x, Gd_x, obj_x, t = x_new, Gd_new, obj_new, t_new

    xb, Rb, ob, dec = best
    return SubproblemResult(xb, max_iter, Rb, ctx.F_k + ob, dec, "max-iters", L)
