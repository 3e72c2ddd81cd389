"""Command-line front end: ``irpnm solve | bench | verify``.

Exit codes: 0 when every run reaches ||r|| <= tol, 2 when a run stops at its
iteration cap, 1 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .bench.generators import FAMILIES, BenchSpec, generate
from .bench.images import write_pgm
from .bench.metrics import restored_image, result_json, write_run_artifacts
from .linops import DenseOperator, read_matrix
from .prox import Regularizer
from .smooth import CompositeProblem, LeastSquares, Logistic, StudentT
from .solver import SOLVERS, AlgoParams, FistaParams, run, run_fista_baseline

log = logging.getLogger("irpnm")

EXIT_OK, EXIT_USAGE, EXIT_MAXITER = 0, 1, 2

# flags named after the algorithm symbols -> AlgoParams fields
_PARAM_FLAGS = {
    "c1": float, "c2": float, "sigma1": float, "sigma2": float, "eta": float,
    "theta": float, "alpha": float, "a": float, "nu_min": float, "nu0": float,
    "nu_bar": float, "delta": float, "tau": float, "p_min": float, "kappa": float,
    "tol": float, "max_outer": int, "inner_max_iter": int, "inner_forcing": float,
}
_SPEC_FLAGS = {"n": int, "m": int, "s": int, "l": int, "d": float, "c_lambda": float,
               "side": int, "level": int, "lam": float}
# baseline tolerances where the second-order tolerance was out of reach
_FISTA_TOL = {"student-l1": 1e-4, "student-group": 1e-3}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _add_problem_args(p):
    p.add_argument("--family", choices=FAMILIES, default="logistic-l1")
    p.add_argument("--seed", type=int, default=0)
    for name, typ in _SPEC_FLAGS.items():
        p.add_argument(_flag(name), dest=name, type=typ, default=None)
    p.add_argument("--image", help="grayscale binary PGM for the image family")


def _add_param_args(p):
    g = p.add_argument_group("algorithm parameters")
    for name, typ in _PARAM_FLAGS.items():
        g.add_argument(_flag(name), dest="param_" + name, metavar=name.upper(), type=typ,
                       default=None)
    g.add_argument("--fista-tol", type=float, default=None)
    g.add_argument("--check-invariants", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="irpnm", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="run one solver on one problem")
    _add_problem_args(s)
    _add_param_args(s)
    s.add_argument("--solver", choices=SOLVERS, default="irpnm-reg")
    s.add_argument("--matrix", help="dense A in the binary matrix format (overrides --family)")
    s.add_argument("--rhs", help="b in the binary matrix format (default: zeros)")
    s.add_argument("--model", choices=("least-squares", "logistic", "student-t"),
                   default="least-squares")
    s.add_argument("--model-nu", type=float, default=1.0, help="Student's t scale")
    s.add_argument("--reg", choices=("zero", "l1", "group-l2"), default="l1")
    s.add_argument("--reg-lam", type=float, default=0.0)
    s.add_argument("--group-size", type=int, default=1)
    s.add_argument("--out", default="irpnm_out")
    s.add_argument("--timing", action="store_true",
                   help="write measured wall_ms into the trace (breaks byte-reproducibility)")
    s.add_argument("--emit-plot-data", metavar="PATH",
                   help="write two columns 'k r_norm' for plotting")

    b = sub.add_parser("bench", help="run a benchmark suite")
    b.add_argument("--families", nargs="+", choices=FAMILIES, default=list(FAMILIES))
    b.add_argument("--seeds", type=int, nargs="+", default=[0])
    b.add_argument("--solvers", nargs="+", choices=SOLVERS, default=["irpnm-reg"])
    for name, typ in _SPEC_FLAGS.items():
        b.add_argument(_flag(name), dest=name, type=typ, default=None)
    b.add_argument("--image")
    _add_param_args(b)
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--out", default="irpnm_bench")

    v = sub.add_parser("verify", help="run the invariant/property suite")
    v.add_argument("--seeds", type=int, default=2)
    return ap


def make_params(args, spec: BenchSpec | None = None) -> AlgoParams:
    kw = {name: getattr(args, "param_" + name) for name in _PARAM_FLAGS
          if getattr(args, "param_" + name) is not None}
    if spec is not None:
        kw.setdefault("tol", spec.tol)
        if spec.nu_min is not None:
            kw.setdefault("nu_min", spec.nu_min)
    kw["check_invariants"] = bool(getattr(args, "check_invariants", False))
    return AlgoParams(**kw)


def spec_from_args(args, family: str, seed: int) -> BenchSpec:
    kw = {k: getattr(args, k) for k in _SPEC_FLAGS if getattr(args, k) is not None}
    if getattr(args, "image", None):
        kw["image"] = args.image
    return BenchSpec(family, seed=seed, **kw).resolved()


def solve_one(problem, x0, solver: str, params: AlgoParams, fista_tol: float | None):
    if solver == "fista":
        return run_fista_baseline(problem, FistaParams(tol=fista_tol or params.tol), x0)
    return run(problem, params, x0, solver=solver)


def _file_problem(args):
    A = read_matrix(args.matrix)
    m, n = A.shape
    b = read_matrix(args.rhs).ravel() if args.rhs else np.zeros(m)
    model = {"least-squares": LeastSquares, "logistic": lambda: Logistic(m),
             "student-t": lambda: StudentT(args.model_nu)}[args.model]()
    if args.reg == "group-l2":
        if n % args.group_size:
            raise UsageError(f"--group-size {args.group_size} does not divide n={n}")
        groups = [np.arange(i, i + args.group_size) for i in range(0, n, args.group_size)]
        reg = Regularizer("group-l2", args.reg_lam, n, groups=groups)
    else:
        reg = Regularizer(args.reg, args.reg_lam, n)
    meta = {"family": "file", "matrix": args.matrix}
    return CompositeProblem(model, DenseOperator(A), b, reg, meta), np.zeros(n)


def cmd_solve(args) -> int:
    if args.matrix:
        spec = None
        problem, x0 = _file_problem(args)
    else:
        spec = spec_from_args(args, args.family, args.seed)
        problem, x0 = generate(spec)
    params = make_params(args, spec)
    fista_tol = args.fista_tol or (_FISTA_TOL.get(spec.family) if spec else None)
    res = solve_one(problem, x0, args.solver, params, fista_tol)
    out = Path(args.out)
    doc = write_run_artifacts(out, res, problem, spec, params, timing=args.timing)
    if res.invariants is not None and res.invariants.violations:
        for v in res.invariants.violations:
            print(f"invariant violation: {v}", file=sys.stderr)
    if args.emit_plot_data:
        with open(args.emit_plot_data, "w") as fh:
            for rec in res.trace:
                fh.write(f"{rec.k} {rec.r_norm!r}\n")
            fh.write(f"{res.iterations} {res.r_norm!r}\n")
    if spec is not None and spec.family == "image-restore":
        peak = problem.meta["peak"]
        write_pgm(out / "restored.pgm", restored_image(problem, res.x) / peak)
        write_pgm(out / "corrupted.pgm", problem.b.reshape(problem.meta["side"], -1) / peak)
    print(f"{res.solver}: {res.reason} after {res.iterations} iterations, "
          f"F = {doc['F']:.10g}, ||r|| = {doc['r_norm']:.3e}", file=sys.stderr)
    return EXIT_OK if res.converged else EXIT_MAXITER


def _bench_task(task):
    spec, solver, params, fista_tol = task
    problem, x0 = generate(spec)
    res = solve_one(problem, x0, solver, params, fista_tol)
    doc = result_json(res, problem)
    viol = len(res.invariants.violations) if res.invariants is not None else ""
    return dict(family=spec.family, seed=spec.seed, solver=solver, iters=res.iterations,
                F=doc["F"], r_norm=doc["r_norm"], time=res.wall_s,
                psnr=doc.get("psnr", ""), reason=res.reason, violations=viol)


def cmd_bench(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tasks, manifest = [], []
    for fam in args.families:
        for seed in args.seeds:
            spec = spec_from_args(args, fam, seed)
            spec = BenchSpec(**{**spec.__dict__, "solvers": tuple(args.solvers)})
            params = make_params(args, spec)
            fista_tol = args.fista_tol or _FISTA_TOL.get(fam)
            manifest.append({"spec": spec.to_dict(), "params": params.to_dict(),
                             "fista_tol": fista_tol or params.tol})
            for solver in args.solvers:
                tasks.append((spec, solver, params, fista_tol))
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as pool:
            rows = list(pool.map(_bench_task, tasks))
    else:
        rows = [_bench_task(t) for t in tasks]
    cols = ["family", "seed", "solver", "iters", "F", "r_norm", "time", "psnr", "reason",
            "violations"]
    path = out / "results.csv"
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        if new:
            w.writeheader()
        w.writerows(rows)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    for r in rows:
        print(f"{r['family']:15s} seed={r['seed']:<3d} {r['solver']:13s} iters={r['iters']:<6d} "
              f"F={r['F']:.10g} r={r['r_norm']:.2e} t={r['time']:.2f}s {r['reason']}")
    return EXIT_OK if all(r["reason"] == "converged" for r in rows) else EXIT_MAXITER


def cmd_verify(args) -> int:
    from .verify import run_suite

    return EXIT_OK if run_suite(seeds=args.seeds) else EXIT_MAXITER


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            stream=sys.stderr, format="%(levelname)s %(message)s")
        handler = {"solve": cmd_solve, "bench": cmd_bench, "verify": cmd_verify}[args.command]
        return handler(args)
    except UsageError as exc:
        print(f"irpnm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        print(f"irpnm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
