import dataclasses
import re

import numpy as np
import pytest
from scipy.special import expit

import irpnm.solver as solver_mod
from irpnm.bench.generators import BenchSpec, generate
from irpnm.invariants import InvariantChecker, InvariantViolation
from irpnm.linops import DenseOperator, IdentityOperator
from irpnm.prox import Regularizer, residual
from irpnm.smooth import CompositeProblem, LeastSquares, Logistic, StudentT
from irpnm.solver import (TRACE_HEADER, AlgoParams, FistaParams, IterationRecord, build_Gk,
                          default_nu0, initial_state, run, run_fista_baseline,
                          run_linesearch_variant, step, trace_to_csv)
from irpnm.subsolver import SubproblemResult, subproblem_residual

from oracles import algorithm_trace, cd_l1_quadratic


def quadratic_l1(n=5, m=8, lam=0.3, seed=0):
    r = np.random.default_rng(seed)
    A = r.standard_normal((m, n))
    b = r.standard_normal(m)
    return CompositeProblem(LeastSquares(), DenseOperator(A), b, Regularizer("l1", lam, n)), A, b


def logistic_l1(n=5, m=12, lam=0.02, seed=0):
    r = np.random.default_rng(seed)
    A = 2.0 * r.standard_normal((m, n))
    return (CompositeProblem(Logistic(m), DenseOperator(A), np.zeros(m), Regularizer("l1", lam, n)),
            A)


def oracle_subsolver(ctx, theta, tau, alpha, max_iter=0, forcing=1.0):
    """Exact subproblem solve by coordinate descent on the dense G_k."""
    n = len(ctx.x_k)
    G = np.column_stack([ctx.G(e) for e in np.eye(n)])
    G = 0.5 * (G + G.T)
    x = cd_l1_quadratic(ctx.grad_k, G, ctx.x_k, ctx.reg.lam)
    Rk = float(np.linalg.norm(subproblem_residual(ctx, x)))
    q = ctx.F_k + ctx.model_change(x)
    return SubproblemResult(x, 1, Rk, q, True, "accepted", float(np.linalg.norm(G, 2)))


class TestParams:
    def test_defaults(self):
        p = AlgoParams()
        assert (p.c1, p.c2, p.sigma1, p.sigma2) == (1e-4, 0.9, 0.5, 4.0)
        assert (p.eta, p.theta, p.alpha, p.a) == (0.9999, 0.9999, 0.99, 1.0)
        assert (p.nu_min, p.nu_bar, p.delta, p.tau, p.p_min, p.kappa) == (1e-8, 100.0, 0.45, 0.45,
                                                                          1e-8, 2.0)

    @pytest.mark.parametrize("r0,expected", [(0.5, 1e-4), (1.0, 1e-4), (1e3, 1e-5), (1e5, 1e-7)])
    def test_default_nu0(self, r0, expected):
        assert default_nu0(r0) == pytest.approx(expected)

    def test_nu0_floored_at_nu_min(self):
        assert AlgoParams(nu_min=1e-4).resolve_nu0(1e6) == 1e-4

    @pytest.mark.parametrize("kw,needle", [
        (dict(nu0=1.0, nu_min=2.0), "nu_min <= nu0"),
        (dict(c1=0.95), "c2 in (c1,1)"),
        (dict(sigma2=1.0), "sigma2 > 1"),
        (dict(kappa=1.2), "kappa > 1 + delta"),
        (dict(tau=0.1), "tau >= delta"),
        (dict(p_min=0.5), "p_min"),
        (dict(a=0.5), "a >= 1"),
        (dict(nu0=1e3), "nu0 <= nu_bar"),
    ])
    def test_validation_names_constraint(self, kw, needle):
        with pytest.raises(ValueError, match=re.escape(needle)):
            AlgoParams(**kw)


class TestBuildGk:
    def test_logistic_has_no_shift(self):
        p, _ = logistic_l1()
        st = initial_state(p, AlgoParams(), np.ones(p.n))
        _, _, Lam = build_Gk(p, st, 1.0)
        assert Lam == 0.0

    def test_least_squares_has_no_shift(self):
        p, _, _ = quadratic_l1()
        _, _, Lam = build_Gk(p, initial_state(p, AlgoParams(), np.zeros(p.n)), 1.0)
        assert Lam == 0.0

    @pytest.mark.parametrize("a", [1.0, 2.5])
    def test_student_shift_makes_psd(self, a, rng):
        m, n = 15, 6
        A = DenseOperator(rng.standard_normal((m, n)))
        p = CompositeProblem(StudentT(0.25), A, 3 * rng.standard_normal(m), Regularizer.zero(n))
        st = initial_state(p, AlgoParams(), np.zeros(n))
        hv, hfv, Lam = build_Gk(p, st, a)
        assert Lam == pytest.approx(-a * p.smooth.hess_min_eig(st.ev.u)) and Lam > 0
        for _ in range(50):
            d = rng.standard_normal(n)
            assert d @ hv(d) >= -1e-10 * (d @ d)
        d = rng.standard_normal(n)
        Ad = A.apply(d)
        np.testing.assert_allclose(hv(d) - hfv(d), Lam * A.adjoint(Ad), rtol=1e-10)


class TestStepBranches:
    def test_unsuccessful_keeps_x_and_inflates(self):
        p, _ = logistic_l1()
        # with c1 near 1 any curvature error marks the step unsuccessful
        params = AlgoParams(c1=0.999999, c2=0.9999999)
        st = initial_state(p, params, 3 * np.ones(p.n))
        new, rec = step(p, st, params)
        assert rec.cls == "unsuccessful"
        np.testing.assert_array_equal(new.x, st.x)
        assert new.nu == params.sigma2 * st.nu
        assert new.mu == pytest.approx(params.sigma2 * st.mu, rel=1e-15)
        assert new.rbar == st.rbar and not new.in_K

    def test_highly_successful_updates_rbar(self):
        p, _, _ = quadratic_l1()
        params = AlgoParams()
        st = initial_state(p, params, np.zeros(p.n))
        new, rec = step(p, st, params)
        assert rec.cls == "highly-successful"
        assert new.in_K and new.rbar == new.r_norm
        assert new.nu == max(params.sigma1 * st.nu, params.nu_min)
        assert new.nu <= params.nu_bar
        assert new.F_val < st.F_val

    def test_inner_failure_forces_unsuccessful(self, monkeypatch):
        p, _ = logistic_l1()

        def failing(ctx, *a, **k):
            return SubproblemResult(ctx.x_k + 1e-3, 7, 1.0, ctx.F_k, False, "max-iters", 1.0)

        monkeypatch.setattr(solver_mod, "solve_subproblem", failing)
        params = AlgoParams()
        st = initial_state(p, params, np.ones(p.n))
        new, rec = step(p, st, params)
        assert rec.cls == "unsuccessful" and rec.inner_status == "max-iters"
        np.testing.assert_array_equal(new.x, st.x)
        assert new.nu == params.sigma2 * st.nu

    @pytest.mark.parametrize("problem", ["quadratic", "logistic"])
    def test_matches_straight_line_oracle(self, problem, monkeypatch):
        if problem == "quadratic":
            p, A, b = quadratic_l1()
            f = lambda x: 0.5 * np.sum((A @ x - b) ** 2)
            grad = lambda x: A.T @ (A @ x - b)
            hess = lambda x: A.T @ A
            x0 = np.zeros(p.n)
        else:
            p, A = logistic_l1()
            m = A.shape[0]
            f = lambda x: np.sum(np.logaddexp(0.0, -(A @ x))) / m
            grad = lambda x: -A.T @ expit(-(A @ x)) / m
            hess = lambda x: A.T @ ((expit(A @ x) * expit(-(A @ x)) / m)[:, None] * A)
            x0 = 3.0 * np.ones(p.n)
        params = AlgoParams()
        monkeypatch.setattr(solver_mod, "solve_subproblem", oracle_subsolver)
        st = initial_state(p, params, x0)
        prm = dataclasses.asdict(params)
        steps = 8
        expected = algorithm_trace(f, grad, hess, p.reg.lam, x0, st.nu, steps, cd_l1_quadratic, prm)
        classes = []
        for cls, nu, rbar, mu, x in expected:
            if st.r_norm < 1e-7:
                # below this both sides compare rounding noise in ared
                break
            st, rec = step(p, st, params)
            classes.append(rec.cls)
            assert rec.cls == cls
            assert st.nu == pytest.approx(nu, rel=1e-12)
            assert st.rbar == pytest.approx(rbar, rel=1e-6, abs=1e-14)
            assert st.mu == pytest.approx(mu, rel=1e-6, abs=1e-20)
            np.testing.assert_allclose(st.x, x, rtol=1e-8, atol=1e-10)
        if problem == "logistic":
            # the start is far out on the flat part: the toy exercises rejection too
            assert "unsuccessful" in classes or "successful" in classes


class TestRun:
    def test_stationary_start_returns_immediately(self):
        p = CompositeProblem(LeastSquares(), IdentityOperator(3), np.zeros(3),
                             Regularizer("l1", 1.0, 3))
        res = run(p, AlgoParams(), np.zeros(3))
        assert res.iterations == 0 and res.converged and res.trace == []

    def test_least_squares_solved_quickly(self, rng):
        c = rng.standard_normal(6)
        p = CompositeProblem(LeastSquares(), IdentityOperator(6), c, Regularizer.zero(6))
        res = run(p, AlgoParams(tol=1e-10), np.zeros(6))
        assert res.converged and res.iterations <= 5 and res.r_norm <= 1e-10
        np.testing.assert_allclose(res.x, c, atol=1e-9)

    def test_max_outer(self):
        p, _ = logistic_l1()
        res = run(p, AlgoParams(max_outer=1, tol=1e-14), np.ones(p.n))
        assert res.reason == "max-outer" and res.iterations == 1 and len(res.trace) == 1

    @pytest.mark.parametrize("solver", ["irpnm-reg", "irpnm-ls", "irpnm-reg-ls"])
    def test_monotone_and_invariants(self, solver):
        spec = BenchSpec("logistic-l1", seed=3, n=40, m=200, s=4).resolved()
        p, x0 = generate(spec)
        res = run(p, AlgoParams(check_invariants=True), x0, solver=solver)
        assert res.converged and res.invariants.ok, res.invariants.violations
        Fs = [rec.F for rec in res.trace] + [res.F]
        assert all(b <= a for a, b in zip(Fs, Fs[1:]))
        for rec, nxt in zip(res.trace, Fs[1:]):
            if rec.cls != "unsuccessful":
                assert nxt < rec.F
        assert res.r_norm == pytest.approx(np.linalg.norm(residual(p, res.x)), rel=1e-12)

    def test_linesearch_full_step_on_quadratic(self):
        p, _, _ = quadratic_l1(lam=0.0)
        res = run_linesearch_variant(p, AlgoParams(tol=1e-9), np.zeros(p.n))
        assert res.converged
        assert res.trace[0].step_len == 1.0
        assert all(0 < r.step_len <= 1 for r in res.trace if r.cls != "unsuccessful")

    def test_linesearch_holds_nu(self):
        p, _ = logistic_l1()
        res = run_linesearch_variant(p, AlgoParams(), np.ones(p.n))
        for a, b in zip(res.trace, res.trace[1:]):
            if a.cls != "unsuccessful":
                assert b.nu == a.nu

    def test_student_group_regression(self):
        # previously stalled near the tolerance on rounding noise in phi
        p, x0 = generate(BenchSpec("student-group", seed=5))
        res = run(p, AlgoParams(check_invariants=True), x0)
        assert res.converged and res.iterations <= 30 and res.invariants.ok

    def test_trace_csv(self):
        p, _ = logistic_l1()
        res = run(p, AlgoParams(), np.ones(p.n))
        text = trace_to_csv(res.trace, timing=False)
        lines = text.splitlines()
        assert lines[0] == ",".join(TRACE_HEADER)
        assert len(lines) == len(res.trace) + 1
        assert all(line.endswith(",0.0") for line in lines[1:])
        assert text == trace_to_csv(run(p, AlgoParams(), np.ones(p.n)).trace, timing=False)


class TestFista:
    def test_identity_least_squares(self, rng):
        c = rng.standard_normal(5)
        p = CompositeProblem(LeastSquares(), IdentityOperator(5), c, Regularizer.zero(5))
        res = run_fista_baseline(p, FistaParams(tol=1e-10), np.zeros(5))
        assert res.converged and res.iterations <= 3

    def test_agrees_with_newton(self):
        spec = BenchSpec("logistic-l1", seed=2, n=40, m=200, s=4).resolved()
        p, x0 = generate(spec)
        a = run(p, AlgoParams(), x0)
        b = run_fista_baseline(p, FistaParams(tol=1e-5), x0)
        assert a.converged and b.converged
        assert abs(a.F - b.F) <= 1e-6 * abs(a.F)
        assert b.iterations >= a.iterations

    def test_step_underflow(self):
        # curvature 100 needs steps below the 0.5 floor
        p = CompositeProblem(LeastSquares(), DenseOperator(10 * np.eye(3)), np.ones(3),
                             Regularizer.zero(3))
        res = run_fista_baseline(p, FistaParams(tol=1e-12, L0=1.0, min_step=0.5), np.zeros(3))
        assert res.reason == "step-underflow"

    def test_function_values_nonincreasing(self):
        p, _ = logistic_l1()
        res = run_fista_baseline(p, FistaParams(tol=1e-6), np.ones(p.n))
        Fs = [r.F for r in res.trace] + [res.F]
        assert all(b <= a * (1 + 1e-15) for a, b in zip(Fs, Fs[1:]))


def _record(**kw):
    base = dict(k=0, cls="highly-successful", F=1.0, r_norm=1.0, pred=1.0, ared=1.0, rho=1.0,
                nu=1e-4, mu=1e-4, d_norm=0.1, inner_iters=1, in_K=True, wall_ms=0.0, rbar=1.0,
                G_norm=1.0, Rk_norm=0.1, inner_status="accepted", step_len=1.0)
    base.update(kw)
    return IterationRecord(**base)


@dataclasses.dataclass
class _Next:
    mu: float
    nu: float
    rbar: float
    F_val: float
    in_K: bool


class TestInvariantChecker:
    def test_accepts_consistent_record(self):
        params = AlgoParams()
        chk = InvariantChecker(params)
        nxt = _Next(mu=5e-5, nu=5e-5, rbar=1.0, F_val=0.5, in_K=False)
        nxt.mu = nxt.nu * nxt.rbar ** params.delta
        chk.observe(_record(), nxt)
        assert chk.ok and chk.checked == 1

    @pytest.mark.parametrize("bad,needle", [
        (dict(pred=1e-9), "pred"),
        (dict(r_norm=0.5), "eta"),
        (dict(cls="unsuccessful", step_len=0.0), "sigma2"),
    ])
    def test_flags_violations(self, bad, needle):
        params = AlgoParams()
        nxt = _Next(mu=1e-4, nu=1e-4, rbar=1.0, F_val=1.0, in_K=False)
        chk = InvariantChecker(params)
        chk.observe(_record(**bad), nxt)
        assert any(needle in v for v in chk.violations)

    def test_strict_raises(self):
        chk = InvariantChecker(AlgoParams(), strict=True)
        with pytest.raises(InvariantViolation):
            chk.observe(_record(pred=-1.0), _Next(1e-4, 1e-4, 1.0, 1.0, False))

    def test_flags_rbar_increase_and_F_increase(self):
        params = AlgoParams()
        chk = InvariantChecker(params)
        chk.observe(_record(), _Next(1e-4, 1e-4, 1.0, 1.0, False))
        chk.observe(_record(k=1, rbar=2.0, r_norm=2.0, in_K=False), _Next(1e-4, 1e-4, 2.0, 3.0, False))
        assert any("rbar increased" in v for v in chk.violations)
        assert any("F increased" in v for v in chk.violations)
