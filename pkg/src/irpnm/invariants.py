"""Executable per-iteration guarantees of the regularized proximal Newton loop.

:class:`InvariantChecker` is fed each (record, next state) pair from
:func:`irpnm.solver.run` when ``AlgoParams.check_invariants`` is set; the
checker is attached to the result as ``RunResult.invariants``.
"""

from __future__ import annotations

import math

__all__ = ["InvariantViolation", "InvariantChecker"]

# relative slack for identities that hold exactly in real arithmetic
_REL = 1e-12
G_SLACK = 1.1


class InvariantViolation(AssertionError):
    pass


class InvariantChecker:
    def __init__(self, params, strict: bool = False, mode: str = "reg"):
        self.params = params
        self.strict = strict
        self.mode = mode
        self.violations: list[str] = []
        self.checked = 0
        self._prev_rbar = None
        self._min_r = math.inf
        self._last_K_rbar = None

    def _fail(self, k, msg):
        text = f"k={k}: {msg}"
        self.violations.append(text)
        if self.strict:
            raise InvariantViolation(text)

    def observe(self, rec, nxt) -> None:
        p = self.params
        k = rec.k
        self.checked += 1
        self._min_r = min(self._min_r, rec.r_norm)
        accepted = rec.inner_status == "accepted"

        if accepted and not rec.pred >= 0.5 * rec.mu * rec.d_norm ** 2:
            self._fail(k, f"pred {rec.pred:.3e} < mu/2 ||d||^2 = {0.5 * rec.mu * rec.d_norm**2:.3e}")
        if self._prev_rbar is not None and rec.rbar > self._prev_rbar:
            self._fail(k, "rbar increased")
        self._prev_rbar = rec.rbar
        if not rec.r_norm > p.eta * rec.rbar:
            self._fail(k, f"||r|| = {rec.r_norm:.3e} <= eta * rbar = {p.eta * rec.rbar:.3e}")
        if rec.rbar < self._min_r:
            self._fail(k, "rbar below min_j ||r(x^j)||")
        if rec.in_K:
            if self._last_K_rbar is not None and rec.rbar > p.eta * self._last_K_rbar:
                self._fail(k, "K members do not decay by eta")
            self._last_K_rbar = rec.rbar

        if accepted and rec.d_norm > 0:
            g = G_SLACK * rec.G_norm
            lo = rec.mu * rec.d_norm / ((1 + g) * (1 + p.theta))
            hi = (1 + g) * rec.d_norm / (1 - p.theta)
            if not lo <= rec.r_norm <= hi:
                self._fail(k, f"residual sandwich {lo:.3e} <= {rec.r_norm:.3e} <= {hi:.3e} fails")

        moved = rec.step_len > 0
        if rec.cls == "unsuccessful":
            if self.mode != "reg-ls" or not moved:
                if abs(nxt.mu - p.sigma2 * rec.mu) > _REL * p.sigma2 * rec.mu:
                    self._fail(k, f"unsuccessful but mu_k+1 = {nxt.mu:.6e} != sigma2 mu_k")
                if nxt.F_val != rec.F:
                    self._fail(k, "unsuccessful but iterate changed")
        else:
            if nxt.mu > rec.mu * (1 + _REL):
                self._fail(k, "successful but mu increased")
            if rec.cls != "unsuccessful" and nxt.in_K and nxt.nu > p.nu_bar:
                self._fail(k, "K member with nu above nu_bar")
        if nxt.F_val > rec.F + _REL * max(1.0, abs(rec.F)):
            self._fail(k, f"F increased {rec.F!r} -> {nxt.F_val!r}")
        if abs(nxt.mu - nxt.nu * nxt.rbar ** p.delta) > _REL * nxt.mu:
            self._fail(k, "mu != nu * rbar^delta")

    @property
    def ok(self) -> bool:
        return not self.violations
