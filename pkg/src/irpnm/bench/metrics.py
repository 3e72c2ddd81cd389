"""Table columns for a finished run, plus result/manifest serialization."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from ..linops import haar2d_inverse, write_matrix
from ..prox import residual
from ..solver import RunResult, trace_to_csv
from .images import psnr

__all__ = ["metrics", "restored_image", "result_json", "write_run_artifacts", "EXACT"]

EXACT = "exact"   # JSON stand-in for an infinite PSNR


def restored_image(problem, x) -> np.ndarray:
    """Map wavelet coefficients back to the image domain."""
    meta = problem.meta
    return haar2d_inverse(x, meta["level"]).reshape(meta["side"], meta["side"])


def metrics(result: RunResult, problem, truth=None) -> dict:
    """F, ||r||, iterations and wall time; PSNR for the image family.

    ``r_norm`` is recomputed from the final iterate, not copied from the
    solver's bookkeeping.
    """
    ev = problem.evaluate(result.x)
    out = {
        "F": ev.F,
        "r_norm": float(np.linalg.norm(residual(problem, result.x, ev))),
        "iters": result.iterations,
        "wall": result.wall_s,
    }
    if problem.meta.get("family") == "image-restore":
        ref = truth if truth is not None else problem.meta["x_true"]
        ref = np.asarray(ref).reshape(problem.meta["side"], -1)
        peak = problem.meta.get("peak", 1.0)
        out["psnr"] = psnr(restored_image(problem, result.x), ref, peak)
        out["psnr_input"] = psnr(problem.b.reshape(ref.shape), ref, peak)
    return out


def _jsonable(v):
    if isinstance(v, float) and math.isinf(v):
        return EXACT
    if isinstance(v, (np.floating, np.integer)):
        return _jsonable(v.item())
    return v


def result_json(result: RunResult, problem, spec=None, params=None, x_path=None) -> dict:
    doc = {k: _jsonable(v) for k, v in metrics(result, problem).items()}
    doc.update(solver=result.solver, reason=result.reason,
               inner_iters_total=result.inner_iters_total, n=problem.n)
    if spec is not None:
        doc["spec"] = spec.to_dict()
    if params is not None:
        doc["params"] = params.to_dict() if hasattr(params, "to_dict") else dict(params)
    if x_path is not None:
        doc["x_file"] = str(x_path)
    return doc


def write_run_artifacts(out_dir, result: RunResult, problem, spec=None, params=None,
                        timing: bool = False, stem: str = "run") -> dict:
    """Write ``<stem>_trace.csv``, ``<stem>_x.bin`` and ``<stem>_result.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{stem}_trace.csv").write_text(trace_to_csv(result.trace, timing=timing))
    x_path = out / f"{stem}_x.bin"
    write_matrix(x_path, result.x)
    doc = result_json(result, problem, spec, params, x_path=x_path.name)
    (out / f"{stem}_result.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return doc
