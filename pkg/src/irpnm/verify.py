"""Self-check suite behind ``irpnm verify``.

Runs operator identities, derivative checks, prox properties and
invariant-checked solves on small instances of every family, printing one
PASS/FAIL line per check.
"""

from __future__ import annotations

import sys
from typing import Callable

import numpy as np

from .bench.generators import FAMILIES, BenchSpec, generate, make_rng
from .linops import (DenseOperator, HaarBlurOperator, IdentityOperator, PartialDCT,
                     haar2d_forward, haar2d_inverse)
from .prox import Regularizer
from .smooth import CompositeProblem, LeastSquares, Logistic, StudentT
from .solver import AlgoParams, run

__all__ = ["run_suite", "SMALL_SIZES"]

# reduced sizes so the whole suite finishes in seconds
SMALL_SIZES = {
    "logistic-l1": dict(n=50, m=300, s=5),
    "logistic-group": dict(n=50, m=300, s=5, l=10),
    "student-l1": dict(n=256),
    "student-group": dict(n=256, l=32, s=4),
    "image-restore": dict(side=32, level=2),
}


def _adjoint_gap(op, rng, trials=20) -> float:
    worst = 0.0
    for _ in range(trials):
        x = rng.standard_normal(op.cols)
        y = rng.standard_normal(op.rows)
        lhs = float(op.apply(x) @ y)
        rhs = float(x @ op.adjoint(y))
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300))
    return worst


def check_adjoints(rng) -> tuple[bool, str]:
    ops = {
        "identity": IdentityOperator(7),
        "dense": DenseOperator(rng.standard_normal((9, 5))),
        "partial-dct": PartialDCT(64, rng.permutation(64)[:20]),
        "haar-composite": HaarBlurOperator(16, 2),
    }
    gaps = {k: _adjoint_gap(op, rng) for k, op in ops.items()}
    worst = max(gaps.values())
    return worst <= 1e-10, f"max relative gap {worst:.1e}"


def check_isometries(rng) -> tuple[bool, str]:
    x = rng.standard_normal(256)
    dct = PartialDCT(256, np.arange(256))
    r1 = np.linalg.norm(dct.apply(x)) / np.linalg.norm(x)
    img = rng.standard_normal(256)
    r2 = np.linalg.norm(haar2d_forward(img, 3)) / np.linalg.norm(img)
    back = np.max(np.abs(haar2d_inverse(haar2d_forward(img, 3), 3) - img))
    ok = abs(r1 - 1) <= 1e-12 and abs(r2 - 1) <= 1e-12 and back <= 1e-12
    return ok, f"|dct|-1={r1 - 1:.1e} |haar|-1={r2 - 1:.1e} roundtrip={back:.1e}"


def _fd_problem(kind, rng):
    m, n = 30, 12
    A = DenseOperator(rng.standard_normal((m, n)) / np.sqrt(n))
    b = rng.standard_normal(m)
    model = {"least-squares": LeastSquares(), "logistic": Logistic(m),
             "student-t": StudentT(0.25)}[kind]
    return CompositeProblem(model, A, b, Regularizer.zero(n))


def check_derivatives(rng, points=5) -> tuple[bool, str]:
    h = 1e-6
    worst = 0.0
    for kind in ("least-squares", "logistic", "student-t"):
        p = _fd_problem(kind, rng)
        for _ in range(points):
            x = rng.standard_normal(p.n)
            v = rng.standard_normal(p.n)
            ev = p.evaluate(x)
            fd_g = (p.evaluate(x + h * v).f - p.evaluate(x - h * v).f) / (2 * h)
            g = float(ev.grad @ v)
            fd_h = (p.evaluate(x + h * v).grad - p.evaluate(x - h * v).grad) / (2 * h)
            hv = ev.hessvec(v)
            worst = max(worst, abs(fd_g - g) / max(abs(g), 1e-8),
                        np.linalg.norm(fd_h - hv) / max(np.linalg.norm(hv), 1e-8))
    return worst <= 1e-4, f"max relative error {worst:.1e}"


def check_prox(rng) -> tuple[bool, str]:
    n = 12
    regs = [Regularizer("l1", 0.7, n, weights=rng.random(n)),
            Regularizer("group-l2", 0.7, n, groups=[np.arange(i, i + 3) for i in range(0, n, 3)])]
    worst = 0.0
    for reg in regs:
        for _ in range(50):
            v1, v2 = 3 * rng.standard_normal(n), 3 * rng.standard_normal(n)
            gap = (np.linalg.norm(reg.prox(v1, 0.5) - reg.prox(v2, 0.5))
                   - np.linalg.norm(v1 - v2))
            worst = max(worst, gap)
    return worst <= 1e-12, f"max expansion {worst:.1e}"


def check_family(family: str, seed: int) -> tuple[bool, str]:
    spec = BenchSpec(family, seed=seed, **SMALL_SIZES[family]).resolved()
    problem, x0 = generate(spec)
    params = AlgoParams(tol=spec.tol, check_invariants=True,
                        **({"nu_min": spec.nu_min} if spec.nu_min else {}))
    res = run(problem, params, x0)
    viol = res.invariants.violations
    ok = res.converged and not viol
    msg = f"{res.reason} in {res.iterations} iterations, {len(viol)} violations"
    if viol:
        msg += f" (first: {viol[0]})"
    return ok, msg


def run_suite(seeds: int = 2, out=None) -> bool:
    """Run every check; returns True when all pass."""
    out = out or sys.stdout
    rng = make_rng(20240601)
    checks: list[tuple[str, Callable[[], tuple[bool, str]]]] = [
        ("adjoint identities", lambda: check_adjoints(rng)),
        ("isometries", lambda: check_isometries(rng)),
        ("derivatives", lambda: check_derivatives(rng)),
        ("prox nonexpansive", lambda: check_prox(rng)),
    ]
    for fam in FAMILIES:
        for s in range(seeds):
            checks.append((f"{fam} seed {s}", lambda f=fam, s=s: check_family(f, s)))
    all_ok = True
    for name, fn in checks:
        ok, msg = fn()
        all_ok &= ok
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {msg}", file=out)
    return all_ok
