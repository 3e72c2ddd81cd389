"""Outer loops: the line-search-free regularized proximal Newton method,
its Armijo line-search and hybrid variants, and a FISTA baseline."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from .prox import residual
from .smooth import CompositeProblem, Evaluation
from .subsolver import SubproblemContext, SubproblemResult, solve_subproblem

__all__ = [
    "AlgoParams",
    "FistaParams",
    "SolverState",
    "IterationRecord",
    "RunResult",
    "build_Gk",
    "initial_state",
    "step",
    "run",
    "run_linesearch_variant",
    "run_fista_baseline",
    "default_nu0",
    "TRACE_HEADER",
    "trace_to_csv",
]

SOLVERS = ("irpnm-reg", "irpnm-ls", "irpnm-reg-ls", "fista")


def default_nu0(r0_norm: float) -> float:
    return min(1e-2 / max(1.0, r0_norm), 1e-4)


@dataclass
class AlgoParams:
    c1: float = 1e-4
    c2: float = 0.9
    sigma1: float = 0.5
    sigma2: float = 4.0
    eta: float = 0.9999
    theta: float = 0.9999
    alpha: float = 0.99
    a: float = 1.0
    nu_min: float = 1e-8
    nu0: Optional[float] = None      # None: min(1e-2 / max(1, ||r(x0)||), 1e-4), floored at nu_min
    nu_bar: float = 100.0
    delta: float = 0.45
    tau: Optional[float] = None      # None: tau = delta
    p_min: float = 1e-8
    kappa: float = 2.0
    tol: float = 1e-5
    max_outer: int = 200
    inner_max_iter: int = 10_000
    power_iters: int = 20
    inner_forcing: float = 0.5
    # line-search variant
    ls_rho: float = 1e-4
    ls_shrink: float = 0.5
    ls_max_backtracks: int = 50
    check_invariants: bool = False

    def __post_init__(self):
        if self.tau is None:
            self.tau = self.delta
        self.validate()

    def validate(self) -> None:
        def need(ok, what):
            if not ok:
                raise ValueError(f"parameter constraint violated: {what}")

        need(0 < self.c1 < 1, "c1 in (0,1)")
        need(self.c1 < self.c2 < 1, "c2 in (c1,1)")
        need(0 < self.sigma1 < 1, "sigma1 in (0,1)")
        need(self.sigma2 > 1, "sigma2 > 1")
        need(0 < self.eta < 1, "eta in (0,1)")
        need(0 < self.theta < 1, "theta in (0,1)")
        need(0 < self.alpha < 1, "alpha in (0,1)")
        need(self.a >= 1, "a >= 1")
        need(0 < self.nu_min <= self.nu_bar, "0 < nu_min <= nu_bar")
        if self.nu0 is not None:
            need(self.nu_min <= self.nu0, "nu_min <= nu0")
            need(self.nu0 <= self.nu_bar, "nu0 <= nu_bar")
        need(0 < self.delta <= 1, "delta in (0,1]")
        need(self.tau >= self.delta, "tau >= delta")
        need(0 < self.p_min < 0.5, "p_min in (0,1/2)")
        need(self.kappa > 1 + self.delta, "kappa > 1 + delta")
        need(self.tol > 0, "tol > 0")
        need(self.max_outer >= 0 and self.inner_max_iter > 0, "iteration caps must be positive")
        need(0 < self.ls_shrink < 1 and self.ls_rho > 0, "line-search constants")

    def resolve_nu0(self, r0_norm: float) -> float:
        if self.nu0 is not None:
            return self.nu0
        return min(max(default_nu0(r0_norm), self.nu_min), self.nu_bar)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class FistaParams:
    tol: float = 1e-5
    max_iter: int = 100_000
    L0: float = 1.0
    min_step: float = 1e-18


@dataclass
class SolverState:
    k: int
    x: np.ndarray
    nu: float
    rbar: float
    mu: float
    Lambda: float
    r_norm: float
    F_val: float
    in_K: bool
    ev: Evaluation = field(repr=False)
    power_vec: np.ndarray = field(repr=False)

    @property
    def grad(self) -> np.ndarray:
        return self.ev.grad


@dataclass
class IterationRecord:
    k: int
    cls: str                  # "unsuccessful" | "successful" | "highly-successful"
    F: float                  # F(x^k)
    r_norm: float             # ||r(x^k)||
    pred: float
    ared: float
    rho: float
    nu: float                 # nu_k
    mu: float                 # mu_k
    d_norm: float
    inner_iters: int
    in_K: bool                # k in K
    wall_ms: float
    rbar: float = float("nan")
    G_norm: float = float("nan")
    Rk_norm: float = float("nan")
    inner_status: str = ""
    step_len: float = 1.0
    Lambda: float = 0.0


TRACE_HEADER = ("k", "class", "F", "r_norm", "pred", "ared", "rho", "nu", "mu",
                "d_norm", "inner_iters", "in_K", "wall_ms")


@dataclass
class RunResult:
    solver: str
    x: np.ndarray
    F: float
    r_norm: float
    iterations: int
    reason: str               # "converged" | "max-outer" | "step-underflow"
    trace: list = field(default_factory=list)
    wall_s: float = 0.0
    inner_iters_total: int = 0
    invariants: object = None   # InvariantChecker when checking was requested

    @property
    def converged(self) -> bool:
        return self.reason == "converged"

    def summary(self) -> dict:
        return {
            "solver": self.solver,
            "F": self.F,
            "r_norm": self.r_norm,
            "iterations": self.iterations,
            "reason": self.reason,
            "wall_s": self.wall_s,
            "inner_iters_total": self.inner_iters_total,
        }


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def trace_to_csv(trace, timing: bool = True) -> str:
    """Serialize trace rows. With ``timing=False`` wall_ms is written as 0 so
    repeated runs produce identical bytes."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for rec in trace:
        w.writerow([
            _fmt(rec.k), rec.cls, _fmt(rec.F), _fmt(rec.r_norm), _fmt(rec.pred),
            _fmt(rec.ared), _fmt(rec.rho), _fmt(rec.nu), _fmt(rec.mu),
            _fmt(rec.d_norm), _fmt(rec.inner_iters), _fmt(rec.in_K),
            _fmt(rec.wall_ms if timing else 0.0),
        ])
    return buf.getvalue()


# -- Algorithm pieces -----------------------------------------------------

def build_Gk(problem: CompositeProblem, state: SolverState, a: float):
    """Return (H_k product, hess f product, Lambda_k).

    ``Lambda_k = a * max(0, -lambda_min(hess psi(A x_k - b)))`` makes
    ``H_k = A^T (hess psi + Lambda_k I) A`` positive semidefinite.
    """
    ev = state.ev
    A = problem.A
    D = ev.hess_diag
    lam_min = problem.smooth.hess_min_eig(ev.u)
    Lambda = a * max(0.0, -lam_min)
    DL = D + Lambda if Lambda > 0 else D

    def hess_vec(d):
        return A.adjoint(DL * A.apply(d))

    def hess_f_vec(d):
        return A.adjoint(D * A.apply(d))

    return hess_vec, hess_f_vec, Lambda


def _power_norm(G, v, iters: int):
    """||G|| for symmetric PSD G by warm-started power iteration."""
    v = v / np.linalg.norm(v)
    est = 0.0
    for _ in range(max(iters, 1)):
        w = G(v)
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return 0.0, v
        est = nw
        v = w / nw
    return est, v


def initial_state(problem: CompositeProblem, params: AlgoParams, x0, seed: int = 0) -> SolverState:
    x0 = np.array(x0, dtype=np.float64, copy=True)
    ev = problem.evaluate(x0)
    F0 = ev.F
    if not np.isfinite(F0):
        raise ValueError("F(x0) is not finite")
    r0 = float(np.linalg.norm(residual(problem, x0, ev)))
    nu0 = params.resolve_nu0(r0)
    rng = np.random.Generator(np.random.Philox(seed))
    return SolverState(k=0, x=x0, nu=nu0, rbar=r0, mu=nu0 * r0 ** params.delta,
                       Lambda=0.0, r_norm=r0, F_val=F0, in_K=True, ev=ev,
                       power_vec=rng.standard_normal(problem.n))


def _line_search(problem, ev, d, mu, params, Ad=None):
    """Largest t in {1, s, s^2, ...} with F(x + t d) <= F(x) - rho t mu ||d||^2."""
    dd = float(d @ d)
    t = 1.0
    for _ in range(params.ls_max_backtracks + 1):
        ev_t = problem.evaluate(ev.x + t * d)
        decrease = -(problem.smooth.value_diff(ev_t.u, ev.u, None if Ad is None else t * Ad)
                     + problem.reg.value_diff(ev_t.x, ev.x))
        if decrease >= params.ls_rho * t * mu * dd:
            return t, ev_t, decrease
        t *= params.ls_shrink
    return None, None, None


def step(problem: CompositeProblem, state: SolverState, params: AlgoParams,
         mode: str = "reg") -> tuple[SolverState, IterationRecord]:
    """One outer iteration. ``mode`` is "reg", "ls" or "reg-ls"."""
    t0 = time.perf_counter()
    ev = state.ev
    x = state.x
    hess_vec, hess_f_vec, Lambda = build_Gk(problem, state, params.a)
    mu = state.mu

    def G(d):
        return hess_vec(d) + mu * d

    G_norm, power_vec = _power_norm(G, state.power_vec, params.power_iters)
    ctx = SubproblemContext(x_k=x, grad_k=ev.grad, hess_vec=hess_vec, mu_k=mu,
                            G_norm_estimate=G_norm, reg=problem.reg, F_k=ev.F,
                            phi_k=ev.phi, r_k_norm=state.r_norm, hess_f_vec=hess_f_vec)
    sub: SubproblemResult = solve_subproblem(ctx, params.theta, params.tau, params.alpha,
                                             params.inner_max_iter, params.inner_forcing)
    G_norm = max(G_norm, sub.lipschitz / 1.01)
    x_hat = sub.x_hat
    d = x_hat - x
    d_norm = float(np.linalg.norm(d))

    Ad = problem.A.apply(d)
    ev_hat = problem.evaluate(x_hat)
    dphi = problem.reg.value_diff(x_hat, x)
    pred = -(float(ev.grad @ d) + 0.5 * float(Ad @ (ev.hess_diag * Ad)) + dphi)
    ared = -(problem.smooth.value_diff(ev_hat.u, ev.u, Ad) + dphi)
    rho = ared / pred if pred > 1e-300 else float("nan")

    r = state.r_norm
    bad = (not sub.accepted
           or not pred > 1e-300
           or pred <= params.p_min * (1.0 - params.theta) * d_norm * min(r, r ** params.kappa)
           or rho <= params.c1)

    step_len = 1.0
    new_ev = ev
    nu = state.nu
    if mode == "ls":
        cls = "unsuccessful"
        if sub.accepted:
            t, ev_t, _ = _line_search(problem, ev, d, mu, params, Ad)
            if t is not None:
                step_len, new_ev = t, ev_t
                cls = "successful"
        if cls == "unsuccessful":
            step_len = 0.0
            nu = params.sigma2 * state.nu
    elif bad:
        cls = "unsuccessful"
        nu = params.sigma2 * state.nu
        step_len = 0.0
        if mode == "reg-ls" and sub.accepted:
            t, ev_t, _ = _line_search(problem, ev, d, mu, params, Ad)
            if t is not None:
                step_len, new_ev = t, ev_t
    else:
        new_ev = ev_hat
        if rho <= params.c2:
            cls = "successful"
            nu = min(state.nu, params.nu_bar)
        else:
            cls = "highly-successful"
            nu = min(max(params.sigma1 * state.nu, params.nu_min), params.nu_bar)

    if new_ev is ev:
        r_new = state.r_norm
    else:
        r_new = float(np.linalg.norm(residual(problem, new_ev.x, new_ev)))
    in_K = r_new <= params.eta * state.rbar
    rbar = r_new if in_K else state.rbar
    new_mu = nu * rbar ** params.delta

    rec = IterationRecord(
        k=state.k, cls=cls, F=ev.F, r_norm=state.r_norm, pred=pred, ared=ared, rho=rho,
        nu=state.nu, mu=mu, d_norm=d_norm, inner_iters=sub.inner_iters, in_K=state.in_K,
        wall_ms=(time.perf_counter() - t0) * 1e3, rbar=state.rbar, G_norm=G_norm,
        Rk_norm=sub.Rk_norm, inner_status=sub.status, step_len=step_len, Lambda=Lambda,
    )
    new_state = SolverState(k=state.k + 1, x=new_ev.x, nu=nu, rbar=rbar, mu=new_mu,
                            Lambda=Lambda, r_norm=r_new, F_val=new_ev.F, in_K=in_K,
                            ev=new_ev, power_vec=power_vec)
    return new_state, rec


_MODES = {"irpnm-reg": "reg", "irpnm-ls": "ls", "irpnm-reg-ls": "reg-ls"}


def run(problem: CompositeProblem, params: AlgoParams | None = None, x0=None,
        solver: str = "irpnm-reg") -> RunResult:
    """Iterate until ||r(x)|| <= tol or ``max_outer`` outer iterations."""
    if solver == "fista":
        fp = FistaParams(tol=(params or AlgoParams()).tol)
        return run_fista_baseline(problem, fp, x0)
    mode = _MODES[solver]
    params = params or AlgoParams()
    if x0 is None:
        x0 = np.zeros(problem.n)
    t_start = time.perf_counter()
    state = initial_state(problem, params, x0)
    trace: list[IterationRecord] = []
    checker = None
    if params.check_invariants:
        from .invariants import InvariantChecker
        checker = InvariantChecker(params, strict=False, mode=mode)
    while state.r_norm > params.tol and state.k < params.max_outer:
        state, rec = step(problem, state, params, mode)
        trace.append(rec)
        if checker is not None:
            checker.observe(rec, state)
    reason = "converged" if state.r_norm <= params.tol else "max-outer"
    return RunResult(solver=solver, x=state.x, F=state.F_val, r_norm=state.r_norm,
                     iterations=state.k, reason=reason, trace=trace,
                     wall_s=time.perf_counter() - t_start,
                     inner_iters_total=sum(r.inner_iters for r in trace),
                     invariants=checker)


def run_linesearch_variant(problem: CompositeProblem, params: AlgoParams | None = None,
                           x0=None) -> RunResult:
    return run(problem, params, x0, solver="irpnm-ls")


def run_fista_baseline(problem: CompositeProblem, params: FistaParams | None = None,
                       x0=None) -> RunResult:
    """FISTA with backtracking (halve the step until the quadratic upper
    bound holds) and function-value restart; stops on ||r(x)|| <= tol."""
    params = params or FistaParams()
    if x0 is None:
        x0 = np.zeros(problem.n)
    t_start = time.perf_counter()
    smooth, reg = problem.smooth, problem.reg
    ev_x = problem.evaluate(np.array(x0, dtype=np.float64, copy=True))
    ev_y = ev_x
    L = params.L0
    t = 1.0
    trace: list[IterationRecord] = []
    k = 0
    reason = "max-outer"
    r_norm = float(np.linalg.norm(residual(problem, ev_x.x, ev_x)))
    while True:
        if r_norm <= params.tol:
            reason = "converged"
            break
        if k >= params.max_iter:
            break
        t0 = time.perf_counter()
        gy = ev_y.grad
        while True:
            x_new = reg.prox(ev_y.x - gy / L, 1.0 / L)
            ev_new = problem.evaluate(x_new)
            e = x_new - ev_y.x
            # f(x_new) - f(y) <= g^T e + L/2 ||e||^2
            lhs = smooth.value_diff(ev_new.u, ev_y.u)
            if lhs <= float(gy @ e) + 0.5 * L * float(e @ e) + 1e-15 * abs(ev_y.f):
                break
            L *= 2.0
            if 1.0 / L < params.min_step:
                reason = "step-underflow"
                break
        if reason == "step-underflow":
            break
        F_old = ev_x.F
        ared = -(smooth.value_diff(ev_new.u, ev_x.u) + reg.value_diff(ev_new.x, ev_x.x))
        if ared < 0.0 and ev_y is not ev_x:
            # function-value restart: drop momentum, retry from x
            t = 1.0
            ev_y = ev_x
            cls = "unsuccessful"
            k += 1
            trace.append(IterationRecord(k - 1, cls, F_old, r_norm, 0.0, 0.0, float("nan"),
                                         0.0, 0.0, 0.0, 0, False,
                                         (time.perf_counter() - t0) * 1e3, step_len=1.0 / L))
            continue
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        beta = (t - 1.0) / t_new
        y = x_new + beta * (x_new - ev_x.x)
        d_norm = float(np.linalg.norm(x_new - ev_x.x))
        ev_x = ev_new
        ev_y = problem.evaluate(y) if beta != 0.0 else ev_new
        t = t_new
        trace.append(IterationRecord(k, "successful", F_old, r_norm, 0.0, ared, float("nan"),
                                     0.0, 0.0, d_norm, 0, False,
                                     (time.perf_counter() - t0) * 1e3, step_len=1.0 / L))
        r_norm = float(np.linalg.norm(residual(problem, ev_x.x, ev_x)))
        k += 1
    return RunResult(solver="fista", x=ev_x.x, F=ev_x.F, r_norm=r_norm, iterations=k,
                     reason=reason, trace=trace, wall_s=time.perf_counter() - t_start)


def record_fields() -> list[str]:
    return [f.name for f in fields(IterationRecord)]
