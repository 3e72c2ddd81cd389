"""Seeded problem generators for the five benchmark families.

All randomness comes from one ``numpy.random.Philox`` stream per problem,
seeded with ``BenchSpec.seed`` and consumed in the order written in each
generator, so a (family, seed, sizes) triple always yields the same bytes.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from ..linops import DenseOperator, HaarBlurOperator, PartialDCT, haar2d_forward
from ..prox import Regularizer
from ..smooth import CompositeProblem, Logistic, StudentT
from .images import read_pgm, synthetic_image

__all__ = [
    "FAMILIES",
    "BenchSpec",
    "make_rng",
    "student_t_noise",
    "logistic_lambda_max",
    "gen_logistic_l1",
    "gen_logistic_group",
    "gen_student_l1",
    "gen_student_group",
    "gen_image_restore",
    "generate",
]

PIXEL_PEAK = 255.0

FAMILIES = ("logistic-l1", "logistic-group", "student-l1", "student-group", "image-restore")

_DEFAULTS = {
    "logistic-l1": dict(n=200, m=2000, s=10, c_lambda=0.1, tol=1e-5),
    "logistic-group": dict(n=200, m=2000, s=10, l=20, c_lambda=0.1, tol=1e-5),
    "student-l1": dict(n=4096, m=512, d=60.0, c_lambda=0.1, tol=1e-5),
    "student-group": dict(n=4096, m=512, s=16, l=512, d=60.0, c_lambda=0.1, tol=1e-5),
    "image-restore": dict(side=64, level=2, lam=1e-2, tol=1e-4, nu_min=1e-4),
}


@dataclass(frozen=True)
class BenchSpec:
    """One problem instance. ``None`` fields take the family default."""

    family: str
    seed: int = 0
    n: Optional[int] = None
    m: Optional[int] = None
    s: Optional[int] = None
    l: Optional[int] = None
    d: Optional[float] = None
    c_lambda: Optional[float] = None
    tol: Optional[float] = None
    side: Optional[int] = None
    level: Optional[int] = None
    lam: Optional[float] = None
    nu_min: Optional[float] = None
    image: Optional[str] = None
    solvers: tuple = ("irpnm-reg",)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {', '.join(FAMILIES)}")

    def resolved(self) -> "BenchSpec":
        """Copy with every family default filled in."""
        fill = {k: v for k, v in _DEFAULTS[self.family].items() if getattr(self, k) is None}
        spec = replace(self, **fill)
        if spec.family.startswith("student") and self.m is None and self.n is not None:
            spec = replace(spec, m=spec.n // 8)
        if spec.family == "student-l1" and spec.s is None:
            spec = replace(spec, s=spec.n // 40)
        if spec.family == "student-group" and self.l is None and self.n is not None:
            spec = replace(spec, l=spec.n // 8)
        return spec

    def to_dict(self) -> dict:
        d = asdict(self)
        d["solvers"] = list(self.solvers)
        return d


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


def student_t_noise(rng: np.random.Generator, df: int, size: int) -> np.ndarray:
    """Student's t draws as z * sqrt(df / chi2_df) from normals only:
    first ``size`` normals for z, then ``size * df`` normals for chi2."""
    z = rng.standard_normal(size)
    chi2 = np.sum(rng.standard_normal((size, df)) ** 2, axis=1)
    return z * np.sqrt(df / chi2)


def _random_subset(rng, n: int, k: int) -> np.ndarray:
    return np.sort(rng.permutation(n)[:k])


# -- logistic regression ---------------------------------------------------

def _logistic_data(spec: BenchSpec, rng):
    n, m, s = spec.n, spec.m, spec.s
    if not (0 < s <= n and m > 0):
        raise ValueError(f"invalid sizes n={n}, m={m}, s={s}")
    # draw order: feature supports, feature values, y_true support, y_true values,
    # v_true, label noise
    cols = np.argsort(rng.random((m, n)), axis=1, kind="stable")[:, :s]
    vals = rng.standard_normal((m, s))
    feats = np.zeros((m, n))
    np.put_along_axis(feats, cols, vals, axis=1)
    k_true = min(10 * s, n)
    supp = _random_subset(rng, n, k_true)
    y_true = np.zeros(n)
    y_true[supp] = rng.standard_normal(k_true)
    v_true = float(rng.standard_normal())
    noise = rng.standard_normal(m) * np.sqrt(0.1)
    labels = np.where(feats @ y_true + v_true + noise >= 0.0, 1.0, -1.0)
    # row i of A is (b_i a_i^T, b_i)
    A = np.hstack([labels[:, None] * feats, labels[:, None]])
    return A, labels, y_true, v_true


def _lambda_max_vector(A: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """(1/m) * ((m_-/m) sum_{b=1} b_i a_i + (m_+/m) sum_{b=-1} b_i a_i), feature part."""
    m = labels.size
    m_pos = int(np.sum(labels > 0))
    m_neg = m - m_pos
    signed = A[:, :-1]
    return ((m_neg / m) * signed[labels > 0].sum(axis=0)
            + (m_pos / m) * signed[labels < 0].sum(axis=0)) / m


def logistic_lambda_max(A: np.ndarray, labels: np.ndarray) -> float:
    """Smallest lambda for which the penalized block is zero at a minimizer."""
    return float(np.max(np.abs(_lambda_max_vector(A, labels))))


def gen_logistic_l1(spec: BenchSpec):
    spec = spec.resolved()
    rng = make_rng(spec.seed)
    A, labels, y_true, v_true = _logistic_data(spec, rng)
    m, n = spec.m, spec.n
    lam_max = logistic_lambda_max(A, labels)
    lam = spec.c_lambda * lam_max
    weights = np.ones(n + 1)
    weights[-1] = 0.0
    reg = Regularizer("l1", lam, n + 1, weights=weights)
    meta = dict(family=spec.family, seed=spec.seed, lam=lam, lam_max=lam_max,
                m_pos=int(np.sum(labels > 0)), m_neg=int(np.sum(labels < 0)),
                penalized=np.arange(n), y_true=y_true, v_true=v_true, spec=spec)
    prob = CompositeProblem(Logistic(m), DenseOperator(A), np.zeros(m), reg, meta)
    return prob, np.zeros(n + 1)


def contiguous_groups(n: int, l: int) -> list[np.ndarray]:
    if l <= 0 or n % l:
        raise ValueError(f"cannot split {n} coordinates into {l} equal groups")
    size = n // l
    return [np.arange(j * size, (j + 1) * size) for j in range(l)]


def gen_logistic_group(spec: BenchSpec):
    spec = spec.resolved()
    rng = make_rng(spec.seed)
    A, labels, y_true, v_true = _logistic_data(spec, rng)
    m, n, l = spec.m, spec.n, spec.l
    groups = contiguous_groups(n, l) + [np.array([n])]   # intercept: own group, weight 0
    vec = _lambda_max_vector(A, labels)
    lam_max = float(max(np.linalg.norm(vec[g]) for g in groups[:-1]))
    lam = spec.c_lambda * lam_max
    weights = np.ones(l + 1)
    weights[-1] = 0.0
    reg = Regularizer("group-l2", lam, n + 1, weights=weights, groups=groups)
    meta = dict(family=spec.family, seed=spec.seed, lam=lam, lam_max=lam_max,
                penalized=np.arange(n), y_true=y_true, v_true=v_true, spec=spec)
    prob = CompositeProblem(Logistic(m), DenseOperator(A), np.zeros(m), reg, meta)
    return prob, np.zeros(n + 1)


# -- Student's t regression ------------------------------------------------

def _dynamic_range_values(rng, k: int, d: float) -> np.ndarray:
    """Random sign times 10^(d * U[0,1] / 20): magnitudes in [1, 10^(d/20)]."""
    sign = np.where(rng.integers(0, 2, size=k) == 1, 1.0, -1.0)
    eta2 = rng.random(k)
    return sign * 10.0 ** (d * eta2 / 20.0)


def _student_problem(spec, rng, x_true, df, nu, J):
    op = PartialDCT(spec.n, J)
    b = op.apply(x_true) + 0.1 * student_t_noise(rng, df, op.rows)
    model = StudentT(nu)
    grad0 = op.adjoint(model.grad(-b))
    return op, b, model, grad0


def gen_student_l1(spec: BenchSpec):
    spec = spec.resolved()
    n, m, s = spec.n, spec.m, spec.s
    if not (0 < m <= n and 0 <= s <= n):
        raise ValueError(f"invalid sizes n={n}, m={m}, s={s}")
    rng = make_rng(spec.seed)
    # draw order: measurement rows, signal support, signs, magnitudes, noise
    J = _random_subset(rng, n, m)
    supp = _random_subset(rng, n, s)
    x_true = np.zeros(n)
    x_true[supp] = _dynamic_range_values(rng, s, spec.d)
    op, b, model, grad0 = _student_problem(spec, rng, x_true, df=4, nu=0.25, J=J)
    lam = spec.c_lambda * float(np.max(np.abs(grad0)))
    reg = Regularizer("l1", lam, n)
    meta = dict(family=spec.family, seed=spec.seed, lam=lam, x_true=x_true, spec=spec)
    prob = CompositeProblem(model, op, b, reg, meta)
    return prob, op.adjoint(b)


def gen_student_group(spec: BenchSpec):
    spec = spec.resolved()
    n, m, s, l = spec.n, spec.m, spec.s, spec.l
    if not (0 < m <= n and 0 <= s <= l):
        raise ValueError(f"invalid sizes n={n}, m={m}, s={s}, l={l}")
    groups = contiguous_groups(n, l)
    rng = make_rng(spec.seed)
    J = _random_subset(rng, n, m)
    active = _random_subset(rng, l, s)
    idx = np.concatenate([groups[j] for j in active]) if s else np.array([], dtype=np.int64)
    x_true = np.zeros(n)
    x_true[idx] = _dynamic_range_values(rng, idx.size, spec.d)
    op, b, model, grad0 = _student_problem(spec, rng, x_true, df=5, nu=0.2, J=J)
    lam = spec.c_lambda * float(np.linalg.norm(grad0))
    reg = Regularizer("group-l2", lam, n, groups=groups)
    meta = dict(family=spec.family, seed=spec.seed, lam=lam, x_true=x_true,
                active_groups=active, spec=spec)
    prob = CompositeProblem(model, op, b, reg, meta)
    return prob, op.adjoint(b)


# -- image restoration -----------------------------------------------------

def gen_image_restore(spec: BenchSpec):
    """Deblurring in Haar coefficients: min_y psi(K B^T y - b) + lam ||y||_1.

    Pixels are on the 8-bit intensity scale [0, 255], so the 1e-3 noise
    scale and lam are relative to gray levels, not to a unit peak.
    """
    spec = spec.resolved()
    if spec.image:
        img = read_pgm(spec.image)
        if img.shape[0] != img.shape[1]:
            raise ValueError("image must be square")
        side = img.shape[0]
    else:
        side = spec.side
        img = synthetic_image(side)
    op = HaarBlurOperator(side, spec.level)
    x_true = PIXEL_PEAK * img.ravel()
    rng = make_rng(spec.seed)
    noise_scale = spec.extra.get("noise_scale", 1e-3)
    b = op.blur(x_true) + noise_scale * student_t_noise(rng, 1, x_true.size)
    reg = Regularizer("l1", spec.lam, x_true.size)
    meta = dict(family=spec.family, seed=spec.seed, lam=spec.lam, x_true=x_true,
                side=side, level=spec.level, peak=PIXEL_PEAK, spec=spec)
    prob = CompositeProblem(StudentT(1.0), op, b, reg, meta)
    return prob, haar2d_forward(b, spec.level)


_GENERATORS = {
    "logistic-l1": gen_logistic_l1,
    "logistic-group": gen_logistic_group,
    "student-l1": gen_student_l1,
    "student-group": gen_student_group,
    "image-restore": gen_image_restore,
}


def generate(spec: BenchSpec):
    """Dispatch on ``spec.family``; returns (problem, x0)."""
    return _GENERATORS[spec.family](spec)
