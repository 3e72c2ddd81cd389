"""Structured linear operators with forward and adjoint application.

Every operator maps flat float64 vectors to flat float64 vectors and is
immutable after construction, so ``apply``/``adjoint`` may be called from
several threads at once.
"""

from __future__ import annotations

import struct
import warnings
from pathlib import Path

import numpy as np
from scipy import fft as sfft

__all__ = [
    "LinearOperator",
    "IdentityOperator",
    "DenseOperator",
    "PartialDCT",
    "HaarBlurOperator",
    "ConvergenceWarning",
    "spectral_norm",
    "haar2d_forward",
    "haar2d_inverse",
    "gaussian_kernel_1d",
    "blur_matrix_1d",
    "read_matrix",
    "write_matrix",
]


class ConvergenceWarning(UserWarning):
    """Raised (as a warning) when an iterative estimate hits its cap."""


class LinearOperator:
    """Base class: a linear map R^cols -> R^rows."""

    kind = "abstract"

    def __init__(self, rows: int, cols: int):
        self.rows = int(rows)
        self.cols = int(cols)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = self._check(x, self.cols, "apply")
        return self._apply(x)

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        y = self._check(y, self.rows, "adjoint")
        return self._adjoint(y)

    # subclasses implement these on validated input
    def _apply(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _adjoint(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @staticmethod
    def _check(v, n: int, what: str) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.ndim != 1 or v.shape[0] != n:
            raise ValueError(f"{what}: expected vector of length {n}, got shape {v.shape}")
        return v

    def to_dense(self) -> np.ndarray:
        """Materialize the operator column by column (small sizes only)."""
        out = np.empty((self.rows, self.cols))
        e = np.zeros(self.cols)
        for j in range(self.cols):
            e[j] = 1.0
            out[:, j] = self._apply(e)
            e[j] = 0.0
        return out

    def __repr__(self) -> str:
        return f"{type(self).__name__}(rows={self.rows}, cols={self.cols})"


class IdentityOperator(LinearOperator):
    kind = "identity"

    def __init__(self, n: int):
        super().__init__(n, n)

    def _apply(self, x):
        return x.copy()

    def _adjoint(self, y):
        return y.copy()


class DenseOperator(LinearOperator):
    kind = "dense"

    def __init__(self, matrix):
        m = np.array(matrix, dtype=np.float64, copy=True)
        if m.ndim != 2:
            raise ValueError("dense operator needs a 2-D matrix")
        m.setflags(write=False)
        self.matrix = m
        super().__init__(*m.shape)

    def _apply(self, x):
        return self.matrix @ x

    def _adjoint(self, y):
        return self.matrix.T @ y

    def to_dense(self):
        return self.matrix.copy()


class PartialDCT(LinearOperator):
    """Rows ``J`` of the orthonormal DCT-II of a length-``n`` signal.

    ``J`` is stored sorted ascending; the adjoint scatters into a zero vector
    and applies the inverse orthonormal transform.
    """

    kind = "partial-dct"

    def __init__(self, n: int, index):
        idx = np.unique(np.asarray(index, dtype=np.int64))
        if idx.size != len(index):
            raise ValueError("partial-dct index set has duplicates")
        if idx.size and (idx[0] < 0 or idx[-1] >= n):
            raise ValueError("partial-dct index out of range")
        idx.setflags(write=False)
        self.n = int(n)
        self.index = idx
        super().__init__(idx.size, n)

    def _apply(self, x):
        return sfft.dct(x, type=2, norm="ortho")[self.index]

    def _adjoint(self, y):
        z = np.zeros(self.n)
        z[self.index] = y
        return sfft.idct(z, type=2, norm="ortho")


# -- Haar wavelets ---------------------------------------------------------

_SQRT1_2 = np.sqrt(0.5)


def _haar_side(n: int, level: int) -> int:
    side = int(round(np.sqrt(n)))
    if side * side != n:
        raise ValueError(f"haar2d: length {n} is not a perfect square")
    if level < 0 or side % (1 << level):
        raise ValueError(f"haar2d: side {side} not divisible by 2**{level}")
    return side


def haar2d_forward(img, level: int) -> np.ndarray:
    """Orthonormal multi-level 2-D Haar analysis of a flattened square image.

    Coefficients use the usual pyramid layout: the coarsest approximation
    occupies the top-left ``side / 2**level`` block.
    """
    img = np.asarray(img, dtype=np.float64)
    side = _haar_side(img.size, level)
    a = img.reshape(side, side).copy()
    h = side
    for _ in range(level):
        blk = a[:h, :h]
        lo = (blk[:, 0::2] + blk[:, 1::2]) * _SQRT1_2
        hi = (blk[:, 0::2] - blk[:, 1::2]) * _SQRT1_2
        blk = np.hstack([lo, hi])
        lo = (blk[0::2, :] + blk[1::2, :]) * _SQRT1_2
        hi = (blk[0::2, :] - blk[1::2, :]) * _SQRT1_2
        a[:h, :h] = np.vstack([lo, hi])
        h //= 2
    return a.ravel()


def haar2d_inverse(coef, level: int) -> np.ndarray:
    """Inverse of :func:`haar2d_forward` (also its adjoint)."""
    coef = np.asarray(coef, dtype=np.float64)
    side = _haar_side(coef.size, level)
    a = coef.reshape(side, side).copy()
    h = side >> level
    for _ in range(level):
        h *= 2
        half = h // 2
        blk = a[:h, :h]
        out = np.empty((h, h))
        lo, hi = blk[:half, :], blk[half:, :]
        out[0::2, :] = (lo + hi) * _SQRT1_2
        out[1::2, :] = (lo - hi) * _SQRT1_2
        lo, hi = out[:, :half].copy(), out[:, half:].copy()
        out[:, 0::2] = (lo + hi) * _SQRT1_2
        out[:, 1::2] = (lo - hi) * _SQRT1_2
        a[:h, :h] = out
    return a.ravel()


def gaussian_kernel_1d(size: int = 9, std: float = 4.0) -> np.ndarray:
    """Normalized 1-D Gaussian; the outer product of two is the 2-D filter."""
    half = (size - 1) / 2.0
    t = np.arange(size) - half
    w = np.exp(-0.5 * (t / std) ** 2)
    return w / w.sum()


def blur_matrix_1d(side: int, kernel) -> np.ndarray:
    """Convolution matrix with half-sample symmetric boundary extension."""
    kernel = np.asarray(kernel, dtype=np.float64)
    half = kernel.size // 2
    mat = np.zeros((side, side))
    for i in range(side):
        for k, w in enumerate(kernel):
            j = i + k - half
            # reflect: ... c b a | a b c ...
            while j < 0 or j >= side:
                j = -j - 1 if j < 0 else 2 * side - j - 1
            mat[i, j] += w
    return mat


class HaarBlurOperator(LinearOperator):
    """Gaussian blur applied after Haar synthesis: ``y -> K (B^T y)``.

    The 2-D blur is separable, so it is stored as one ``side x side``
    matrix applied along both axes.
    """

    kind = "haar-composite"

    def __init__(self, side: int, level: int, kernel_size: int = 9, kernel_std: float = 4.0):
        n = side * side
        _haar_side(n, level)
        self.side = int(side)
        self.level = int(level)
        self.kernel_size = int(kernel_size)
        self.kernel_std = float(kernel_std)
        k = blur_matrix_1d(side, gaussian_kernel_1d(kernel_size, kernel_std))
        k.setflags(write=False)
        self.blur1d = k
        super().__init__(n, n)

    def blur(self, img: np.ndarray) -> np.ndarray:
        x = np.asarray(img, dtype=np.float64).reshape(self.side, self.side)
        return (self.blur1d @ x @ self.blur1d.T).ravel()

    def blur_adjoint(self, img: np.ndarray) -> np.ndarray:
        x = np.asarray(img, dtype=np.float64).reshape(self.side, self.side)
        return (self.blur1d.T @ x @ self.blur1d).ravel()

    def _apply(self, y):
        return self.blur(haar2d_inverse(y, self.level))

    def _adjoint(self, z):
        return haar2d_forward(self.blur_adjoint(z), self.level)


class _Adjoint(LinearOperator):
    kind = "adjoint"

    def __init__(self, op: LinearOperator):
        self.op = op
        super().__init__(op.cols, op.rows)

    def _apply(self, x):
        return self.op._adjoint(x)

    def _adjoint(self, y):
        return self.op._apply(y)


def transpose(op: LinearOperator) -> LinearOperator:
    """Lazy adjoint view of ``op``."""
    return _Adjoint(op)


def spectral_norm(op: LinearOperator, tol: float = 1e-6, max_iter: int = 500,
                  seed: int = 0) -> float:
    """Largest singular value of ``op`` by power iteration on ``A^T A``.

    Stops once the eigen-residual ``||A^T A v - rho v||`` falls below
    ``tol * rho``. If ``max_iter`` is hit first the best estimate is returned
    and a :class:`ConvergenceWarning` is emitted.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    rng = np.random.Generator(np.random.Philox(seed))
    v = rng.standard_normal(op.cols)
    v /= np.linalg.norm(v)
    rho = 0.0
    for _ in range(max_iter):
        w = op._adjoint(op._apply(v))
        rho = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        if np.linalg.norm(w - rho * v) <= tol * rho:
            return float(np.sqrt(max(rho, 0.0)))
        v = w / nw
    warnings.warn(f"spectral_norm: no convergence in {max_iter} iterations",
                  ConvergenceWarning, stacklevel=2)
    return float(np.sqrt(max(rho, 0.0)))


# -- binary matrix format --------------------------------------------------
# header: rows, cols as little-endian u64; body: row-major little-endian f64

_HEADER = struct.Struct("<QQ")


def write_matrix(path, mat) -> None:
    mat = np.asarray(mat, dtype="<f8")
    if mat.ndim == 1:
        mat = mat.reshape(-1, 1)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(*mat.shape))
        fh.write(np.ascontiguousarray(mat).tobytes())


def read_matrix(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    rows, cols = _HEADER.unpack_from(data)
    body = data[_HEADER.size:]
    if len(body) != rows * cols * 8:
        raise ValueError(f"{path}: expected {rows * cols} doubles, found {len(body) / 8:g}")
    return np.frombuffer(body, dtype="<f8").reshape(rows, cols).astype(np.float64)
