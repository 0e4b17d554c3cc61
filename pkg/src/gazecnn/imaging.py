"""Raster primitives.

Gray images are 2-D ``uint8`` arrays indexed ``[y, x]``; binary images are
2-D ``uint8`` arrays holding only 0 and 1. Integral images are
``(h + 1, w + 1)`` ``uint32`` tables with a zero top row and left column, so
``ii[y, x]`` is the sum of every source pixel strictly above and left of
``(y, x)``.
"""

from __future__ import annotations

import os
from typing import NamedTuple

import numpy as np

from .errors import BoundsError, DegenerateHistogramError, MalformedInputError


class Rect(NamedTuple):
    x: int
    y: int
    w: int
    h: int

    @property
    def area(self) -> int:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)


def iou(a: Rect, b: Rect) -> float:
    """Intersection over union; 0 when either box has zero area."""
    ix = max(0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x))
    iy = max(0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y))
    inter = ix * iy
    union = a.w * a.h + b.w * b.h - inter
    if union <= 0:
        return 0.0
    return inter / union


def round_half_up(v: float) -> int:
    return int(np.floor(v + 0.5))


def as_gray(img) -> np.ndarray:
    """Validate and return ``img`` as a 2-D uint8 array (no copy if possible)."""
    arr = np.asarray(img)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise MalformedInputError(f"expected a non-empty 2-D raster, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise MalformedInputError("intensities outside [0, 255]")
        arr = arr.astype(np.uint8)
    return arr


def check_rect(r: Rect, width: int, height: int) -> None:
    if r.x < 0 or r.y < 0 or r.w < 0 or r.h < 0 or r.x + r.w > width or r.y + r.h > height:
        raise BoundsError(f"rect {tuple(r)} outside {width}x{height} image")


def to_grayscale(rgb, width: int | None = None, height: int | None = None) -> np.ndarray:
    """BT.601 luma with round-half-up, computed in exact integer arithmetic.

    ``rgb`` is either an ``(h, w, 3)`` array or a flat interleaved buffer, in
    which case ``width`` and ``height`` are required.
    """
    if isinstance(rgb, (bytes, bytearray, memoryview)):
        rgb = np.frombuffer(rgb, dtype=np.uint8)
    arr = np.asarray(rgb)
    if arr.ndim == 1:
        if width is None or height is None:
            raise MalformedInputError("flat RGB buffer needs width and height")
        if width < 1 or height < 1 or arr.size != width * height * 3:
            raise MalformedInputError(
                f"buffer of {arr.size} bytes does not hold a {width}x{height} RGB raster")
        arr = arr.reshape(height, width, 3)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise MalformedInputError(f"expected (h, w, 3) raster, got shape {arr.shape}")
    a = arr.astype(np.int64)
    y = (299 * a[..., 0] + 587 * a[..., 1] + 114 * a[..., 2] + 500) // 1000
    return np.clip(y, 0, 255).astype(np.uint8)


def integral(img) -> np.ndarray:
    img = as_gray(img)
    h, w = img.shape
    ii = np.zeros((h + 1, w + 1), dtype=np.uint32)
    np.cumsum(np.cumsum(img, axis=0, dtype=np.uint32), axis=1, dtype=np.uint32, out=ii[1:, 1:])
    return ii


def rect_sum(ii: np.ndarray, r: Rect) -> int:
    h, w = ii.shape[0] - 1, ii.shape[1] - 1
    check_rect(r, w, h)
    x0, y0, x1, y1 = r.x, r.y, r.x + r.w, r.y + r.h
    return int(ii[y1, x1]) - int(ii[y0, x1]) - int(ii[y1, x0]) + int(ii[y0, x0])


def crop(img, r: Rect) -> np.ndarray:
    img = as_gray(img)
    if r.w < 1 or r.h < 1:
        raise BoundsError(f"crop rect {tuple(r)} is empty")
    check_rect(r, img.shape[1], img.shape[0])
    return img[r.y:r.y + r.h, r.x:r.x + r.w].copy()


def _bilinear_axis(n_in: int, n_out: int):
    """Source taps for each output pixel with exact rational weights.

    Pixel centres are aligned: output ``i`` samples source coordinate
    ``((2i + 1) * n_in - n_out) / (2 * n_out)``, clamped to the edge. Returns
    ``(i0, i1, frac_num, denom)`` with weight of ``i1`` = ``frac_num / denom``.
    """
    denom = 2 * n_out
    num = (2 * np.arange(n_out, dtype=np.int64) + 1) * n_in - n_out
    num = np.clip(num, 0, (n_in - 1) * denom)
    i0 = num // denom
    frac = num - i0 * denom
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, frac, denom


def resize_float(img: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Bilinear resize returning unrounded float64 samples."""
    if out_w < 1 or out_h < 1:
        raise MalformedInputError(f"target size {out_w}x{out_h} must be at least 1x1")
    src = np.asarray(img, dtype=np.float64)
    h, w = src.shape
    y0, y1, fy, dy = _bilinear_axis(h, out_h)
    x0, x1, fx, dx = _bilinear_axis(w, out_w)
    fx = (fx / dx)[None, :]
    fy = (fy / dy)[:, None]
    a = src[y0][:, x0]
    b = src[y0][:, x1]
    c = src[y1][:, x0]
    d = src[y1][:, x1]
    return (1.0 - fy) * ((1.0 - fx) * a + fx * b) + fy * ((1.0 - fx) * c + fx * d)


def resize_bilinear(img, out_w: int, out_h: int) -> np.ndarray:
    """Bilinear resize of a gray image, rounded half up in exact integer arithmetic."""
    img = as_gray(img)
    if out_w < 1 or out_h < 1:
        raise MalformedInputError(f"target size {out_w}x{out_h} must be at least 1x1")
    src = img.astype(np.int64)
    h, w = src.shape
    y0, y1, fy, dy = _bilinear_axis(h, out_h)
    x0, x1, fx, dx = _bilinear_axis(w, out_w)
    fx = fx[None, :]
    fy = fy[:, None]
    top = (dx - fx) * src[y0][:, x0] + fx * src[y0][:, x1]
    bot = (dx - fx) * src[y1][:, x0] + fx * src[y1][:, x1]
    num = (dy - fy) * top + fy * bot
    den = dx * dy
    return ((2 * num + den) // (2 * den)).astype(np.uint8)


def otsu_threshold(img) -> int:
    """Threshold maximizing between-class variance; lowest one wins ties.

    The criterion ``(n*S0 - n0*S)^2 / (n0*n1)`` is proportional to
    ``w0*w1*(mu0 - mu1)^2`` and is compared exactly in integers, so ties are
    real ties rather than float noise.
    """
    img = as_gray(img)
    hist = np.bincount(img.ravel(), minlength=256).astype(np.int64)
    if np.count_nonzero(hist) < 2:
        raise DegenerateHistogramError("image has a single intensity; Otsu is undefined")
    n0s = np.cumsum(hist).tolist()
    s0s = np.cumsum(hist * np.arange(256, dtype=np.int64)).tolist()
    n, total = n0s[-1], s0s[-1]
    best_t, best_num, best_den = -1, -1, 1
    for t in range(255):
        n0 = n0s[t]
        n1 = n - n0
        if n0 == 0 or n1 == 0:
            continue
        num = (n * s0s[t] - n0 * total) ** 2
        den = n0 * n1
        if num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    return best_t


def binarize_otsu(img) -> tuple[np.ndarray, int]:
    img = as_gray(img)
    t = otsu_threshold(img)
    return (img > t).astype(np.uint8), t


# --- PGM (P5, maxval 255) -------------------------------------------------

def _pgm_tokens(data: bytes, count: int):
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise MalformedInputError("truncated PGM header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def decode_pgm(data: bytes) -> np.ndarray:
    tokens, pos = _pgm_tokens(data, 4)
    if tokens[0] != b"P5":
        raise MalformedInputError(f"not a binary PGM (magic {tokens[0]!r})")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError as e:
        raise MalformedInputError(f"bad PGM header: {e}") from None
    if maxval != 255:
        raise MalformedInputError(f"only maxval 255 is supported, got {maxval}")
    if w < 1 or h < 1:
        raise MalformedInputError(f"bad PGM size {w}x{h}")
    raster = data[pos:pos + w * h]
    if len(raster) != w * h:
        raise MalformedInputError(f"PGM raster truncated: {len(raster)} of {w * h} bytes")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w).copy()


def encode_pgm(img) -> bytes:
    img = as_gray(img)
    h, w = img.shape
    return b"P5\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(img).tobytes()


def read_pgm(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as f:
        return decode_pgm(f.read())


def write_pgm(path: str | os.PathLike, img) -> None:
    with open(path, "wb") as f:
        f.write(encode_pgm(img))
