"""Convex regularizers with closed-form proximity operators, and the
prox-gradient residuals used for stationarity and subproblem accuracy."""

from __future__ import annotations

import numpy as np

__all__ = ["Regularizer", "residual", "subproblem_residual"]

_KINDS = ("zero", "l1", "group-l2")


class Regularizer:
    """phi(x) = lam * sum_i w_i |x_i|  (l1)  or  lam * sum_J w_J ||x_J||_2  (group-l2).

    Parameters
    ----------
    kind : {"zero", "l1", "group-l2"}
    lam : float
        Nonnegative penalty level.
    n : int
        Dimension of x.
    weights : array, optional
        Per-coordinate (l1) or per-group (group-l2) multipliers of ``lam``.
        A zero weight exempts the coordinate or group, e.g. an intercept.
    groups : sequence of index arrays, optional
        Partition of ``range(n)`` for ``group-l2``.
    """

    def __init__(self, kind: str, lam: float = 0.0, n: int | None = None,
                 weights=None, groups=None):
        if kind not in _KINDS:
            raise ValueError(f"unknown regularizer kind {kind!r}")
        if lam < 0:
            raise ValueError("lam must be >= 0")
        self.kind = kind
        self.lam = float(lam)
        self.n = n
        self.groups = None
        self.group_id = None
        if kind == "group-l2":
            if groups is None or n is None:
                raise ValueError("group-l2 needs n and groups")
            self.groups = tuple(np.asarray(g, dtype=np.int64) for g in groups)
            gid = np.full(n, -1, dtype=np.int64)
            for j, g in enumerate(self.groups):
                if np.any(gid[g] >= 0) or len(np.unique(g)) != len(g):
                    raise ValueError("groups overlap")
                gid[g] = j
            if np.any(gid < 0):
                raise ValueError("groups do not cover every coordinate")
            gid.setflags(write=False)
            self.group_id = gid
            size = len(self.groups)
        else:
            size = n
        if weights is None:
            self.weights = None
        else:
            w = np.array(weights, dtype=np.float64)
            if size is not None and w.shape != (size,):
                raise ValueError(f"weights must have length {size}")
            if np.any(w < 0):
                raise ValueError("weights must be nonnegative")
            w.setflags(write=False)
            self.weights = w

    @classmethod
    def zero(cls, n: int | None = None) -> "Regularizer":
        return cls("zero", 0.0, n)

    def _group_norms(self, v):
        return np.sqrt(np.bincount(self.group_id, weights=v * v, minlength=len(self.groups)))

    def value(self, x) -> float:
        if self.kind == "zero" or self.lam == 0.0:
            return 0.0
        if self.kind == "l1":
            a = np.abs(x)
        else:
            a = self._group_norms(x)
        if self.weights is not None:
            a = a * self.weights
        return self.lam * float(np.sum(a))

    def value_diff(self, x_new, x_old) -> float:
        """phi(x_new) - phi(x_old), summed termwise so that a small change is
        not lost against a large phi."""
        if self.kind == "zero" or self.lam == 0.0:
            return 0.0
        x_new = np.asarray(x_new, dtype=np.float64)
        x_old = np.asarray(x_old, dtype=np.float64)
        if self.kind == "l1":
            a = np.abs(x_new) - np.abs(x_old)
        else:
            na, nb = self._group_norms(x_new), self._group_norms(x_old)
            sq = np.bincount(self.group_id, weights=(x_new - x_old) * (x_new + x_old),
                             minlength=len(self.groups))
            den = na + nb
            a = np.divide(sq, den, out=np.zeros_like(sq), where=den > 0)
        if self.weights is not None:
            a = a * self.weights
        return self.lam * float(np.sum(a))

    def prox(self, v, t: float) -> np.ndarray:
        """argmin_y  t * phi(y) + 0.5 * ||y - v||^2."""
        if not t > 0:
            raise ValueError("prox step t must be positive")
        v = np.asarray(v, dtype=np.float64)
        if self.kind == "zero" or self.lam == 0.0:
            return v.copy()
        thr = t * self.lam
        if self.weights is not None:
            thr = thr * self.weights
        if self.kind == "l1":
            return np.sign(v) * np.maximum(np.abs(v) - thr, 0.0)
        norms = self._group_norms(v)
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(norms > 0, np.maximum(1.0 - thr / norms, 0.0), 0.0)
        return v * scale[self.group_id]

    def describe(self) -> dict:
        d = {"kind": self.kind, "lam": self.lam}
        if self.groups is not None:
            d["n_groups"] = len(self.groups)
        return d

    def __repr__(self) -> str:
        return f"Regularizer({self.kind!r}, lam={self.lam:g})"


def residual(problem, x, cache=None) -> np.ndarray:
    """r(x) = x - prox_phi(x - grad f(x)); zero exactly at stationary points."""
    ev = cache if cache is not None else problem.evaluate(x)
    x = ev.x
    return x - problem.reg.prox(x - ev.grad, 1.0)


def subproblem_residual(ctx, x, Gd=None) -> np.ndarray:
    """R_k(x) = x - prox_phi(x - grad_k - G_k (x - x_k)).

    ``Gd`` may carry a precomputed ``G_k (x - x_k)``.
    """
    x = np.asarray(x, dtype=np.float64)
    if Gd is None:
        Gd = ctx.G(x - ctx.x_k)
    return x - ctx.reg.prox(x - ctx.grad_k - Gd, 1.0)
