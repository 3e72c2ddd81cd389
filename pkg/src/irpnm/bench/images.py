"""Binary PGM (P5) I/O and a synthetic grayscale test image."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

__all__ = ["read_pgm", "write_pgm", "synthetic_image", "psnr"]


def _tokens(data: bytes):
    """Yield whitespace-separated header tokens and the offset after each."""
    i = 0
    while True:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if data[i:i + 1] == b"#":
            while i < len(data) and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(data) and not data[j:j + 1].isspace():
            j += 1
        yield data[i:j], j
        i = j


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM and return a float image scaled to [0, 1]."""
    data = Path(path).read_bytes()
    tok = _tokens(data)
    magic, _ = next(tok)
    if magic != b"P5":
        raise ValueError(f"{path}: not a binary PGM (magic {magic!r})")
    w = int(next(tok)[0])
    h = int(next(tok)[0])
    maxval_raw, end = next(tok)
    maxval = int(maxval_raw)
    body = data[end + 1:]
    dtype = ">u2" if maxval > 255 else "u1"
    px = np.frombuffer(body, dtype=dtype, count=w * h)
    return px.reshape(h, w).astype(np.float64) / maxval


def write_pgm(path, img) -> None:
    img = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    h, w = img.shape
    px = np.rint(img * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(px.tobytes())


def synthetic_image(side: int = 64) -> np.ndarray:
    """Piecewise-smooth test scene: shaded background, a bright disk, a dark
    bar, a triangle and a patch of fine stripes."""
    t = (np.arange(side) + 0.5) / side
    yy, xx = np.meshgrid(t, t, indexing="ij")
    img = 0.25 + 0.2 * xx + 0.1 * yy
    img[(xx - 0.32) ** 2 + (yy - 0.35) ** 2 < 0.18 ** 2] = 0.9
    img[(np.abs(xx - 0.72) < 0.08) & (np.abs(yy - 0.45) < 0.3)] = 0.08
    img[(yy > 0.62) & (yy < 0.92) & (xx > 0.12) & (xx - 0.12 < (yy - 0.62) * 1.2)] = 0.65
    stripes = (xx > 0.55) & (xx < 0.95) & (yy > 0.8) & (yy < 0.95)
    img[stripes] = 0.5 + 0.35 * np.sign(np.sin(2 * np.pi * xx[stripes] * side / 4))
    return img


def psnr(img, ref, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical images."""
    mse = float(np.mean((np.asarray(img) - np.asarray(ref)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)
