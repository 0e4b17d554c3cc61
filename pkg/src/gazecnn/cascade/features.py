"""Haar and LBP features over integral images.

A feature is declared inside a base window. When evaluated on a larger
window its rectangles are scaled by ``window / base_window`` and snapped to
integer coordinates. Haar values are the weighted rectangle sums normalized
by window area; each rectangle's sum is rescaled by ``base_area /
scaled_area`` so rounding never breaks the zero-sum property. The weighted
sum is accumulated as an exact integer over a common denominator and divided
once, so a brightness shift leaves the value bit-identical at every scale.

LBP compares eight neighbour cells with the centre cell of a 3x3 grid. Bit
``k`` (value ``1 << k``) is set when neighbour ``k`` is >= the centre, with
neighbours taken clockwise from the top-left cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..errors import BoundsError, CascadeValidationError
from ..imaging import Rect, check_rect, rect_sum, round_half_up

# (row, col) of the eight neighbour cells, clockwise from top-left
LBP_NEIGHBORS = ((0, 0), (0, 1), (0, 2), (1, 2), (2, 2), (2, 1), (2, 0), (1, 0))


@dataclass(frozen=True)
class HaarFeature:
    rects: tuple  # of (Rect, weight)
    base_window: tuple

    def __post_init__(self):
        object.__setattr__(self, "rects", tuple((Rect(*r), int(wt)) for r, wt in self.rects))
        object.__setattr__(self, "base_window", tuple(int(v) for v in self.base_window))
        bw, bh = self.base_window
        if not 2 <= len(self.rects) <= 3:
            raise CascadeValidationError(f"Haar feature needs 2-3 rects, got {len(self.rects)}")
        for r, _ in self.rects:
            if r.w <= 0 or r.h <= 0:
                raise CascadeValidationError(f"zero-area Haar rect {tuple(r)}")
            if r.x < 0 or r.y < 0 or r.x + r.w > bw or r.y + r.h > bh:
                raise CascadeValidationError(f"Haar rect {tuple(r)} outside base window {bw}x{bh}")
        total = sum(wt * r.w * r.h for r, wt in self.rects)
        if total != 0:
            raise CascadeValidationError(f"Haar weighted area sums to {total}, expected 0")


@dataclass(frozen=True)
class LbpFeature:
    cell: Rect
    base_window: tuple

    def __post_init__(self):
        object.__setattr__(self, "cell", Rect(*self.cell))
        object.__setattr__(self, "base_window", tuple(int(v) for v in self.base_window))
        c = self.cell
        bw, bh = self.base_window
        if c.w <= 0 or c.h <= 0:
            raise CascadeValidationError(f"zero-area LBP cell {tuple(c)}")
        if c.x < 0 or c.y < 0 or c.x + 3 * c.w > bw or c.y + 3 * c.h > bh:
            raise CascadeValidationError(f"LBP grid of cell {tuple(c)} outside base window {bw}x{bh}")


def _scale_rect(r: Rect, sx: float, sy: float, win_w: int, win_h: int) -> Rect:
    x = min(round_half_up(r.x * sx), win_w - 1)
    y = min(round_half_up(r.y * sy), win_h - 1)
    w = max(1, min(round_half_up(r.w * sx), win_w - x))
    h = max(1, min(round_half_up(r.h * sy), win_h - y))
    return Rect(x, y, w, h)


@lru_cache(maxsize=65536)
def haar_layout(f: HaarFeature, win_w: int, win_h: int):
    """Scaled rects, integer multipliers and the shared denominator.

    value = sum_k(mult_k * rect_sum_k) / denom, where ``mult_k = weight_k *
    base_area_k * L / scaled_area_k`` with ``L`` the lcm of the scaled areas
    and ``denom = L * base_window_area``. The multipliers inherit the zero-sum
    property exactly.
    """
    bw, bh = f.base_window
    sx, sy = win_w / bw, win_h / bh
    scaled = [(_scale_rect(r, sx, sy, win_w, win_h), r, wt) for r, wt in f.rects]
    lcm = math.lcm(*(s.w * s.h for s, _, _ in scaled))
    mults = tuple(wt * r.w * r.h * (lcm // (s.w * s.h)) for s, r, wt in scaled)
    # sums are at most 255 * window area; keep the numerator inside int64
    if sum(abs(m) for m in mults) * 255 * win_w * win_h >= 2 ** 62:
        raise BoundsError(f"window {win_w}x{win_h} too large for exact Haar evaluation")
    return tuple(s for s, _, _ in scaled), mults, float(lcm * bw * bh)


@lru_cache(maxsize=65536)
def lbp_layout(f: LbpFeature, win_w: int, win_h: int) -> Rect:
    """Scaled cell of the 3x3 grid, shrunk if rounding would overflow the window."""
    bw, bh = f.base_window
    sx, sy = win_w / bw, win_h / bh
    c = f.cell
    x = round_half_up(c.x * sx)
    y = round_half_up(c.y * sy)
    w = max(1, round_half_up(c.w * sx))
    h = max(1, round_half_up(c.h * sy))
    w = max(1, min(w, (win_w - x) // 3))
    h = max(1, min(h, (win_h - y) // 3))
    x = min(x, win_w - 3 * w)
    y = min(y, win_h - 3 * h)
    return Rect(x, y, w, h)


def _window_check(ii: np.ndarray, window: Rect) -> None:
    if window.w < 1 or window.h < 1:
        raise BoundsError(f"empty window {tuple(window)}")
    check_rect(window, ii.shape[1] - 1, ii.shape[0] - 1)


def eval_haar(ii: np.ndarray, f: HaarFeature, window: Rect) -> float:
    window = Rect(*window)
    _window_check(ii, window)
    rects, mults, denom = haar_layout(f, window.w, window.h)
    num = 0
    for s, m in zip(rects, mults):
        num += m * rect_sum(ii, Rect(window.x + s.x, window.y + s.y, s.w, s.h))
    return float(num) / denom


def eval_lbp(ii: np.ndarray, f: LbpFeature, window: Rect) -> int:
    window = Rect(*window)
    _window_check(ii, window)
    c = lbp_layout(f, window.w, window.h)
    x0, y0 = window.x + c.x, window.y + c.y
    sums = [[rect_sum(ii, Rect(x0 + j * c.w, y0 + i * c.h, c.w, c.h)) for j in range(3)]
            for i in range(3)]
    center = sums[1][1]
    code = 0
    for k, (i, j) in enumerate(LBP_NEIGHBORS):
        if sums[i][j] >= center:
            code |= 1 << k
    return code


# --- batched evaluation over many windows of one size ----------------------
#
# ``flat`` is an integral image raveled to int64; ``base`` holds the flat index
# of each window's top-left corner, ``stride`` is the integral row length.

def _box(flat, base, stride, x, y, w, h):
    o00 = y * stride + x
    o01 = o00 + w
    o10 = o00 + h * stride
    o11 = o10 + w
    return flat[base + o11] - flat[base + o01] - flat[base + o10] + flat[base + o00]


def haar_values(flat: np.ndarray, base: np.ndarray, stride: int, f: HaarFeature,
                win_w: int, win_h: int) -> np.ndarray:
    rects, mults, denom = haar_layout(f, win_w, win_h)
    num = np.zeros(base.shape, dtype=np.int64)
    for s, m in zip(rects, mults):
        num += m * _box(flat, base, stride, s.x, s.y, s.w, s.h)
    return num.astype(np.float64) / denom


def lbp_codes(flat: np.ndarray, base: np.ndarray, stride: int, f: LbpFeature,
              win_w: int, win_h: int) -> np.ndarray:
    c = lbp_layout(f, win_w, win_h)
    # 4x4 lattice of corner lookups shared by the nine cells
    corner = [[flat[base + ((c.y + i * c.h) * stride + c.x + j * c.w)] for j in range(4)]
              for i in range(4)]

    def cell(i, j):
        return corner[i + 1][j + 1] - corner[i][j + 1] - corner[i + 1][j] + corner[i][j]

    center = cell(1, 1)
    code = np.zeros(base.shape, dtype=np.uint8)
    for k, (i, j) in enumerate(LBP_NEIGHBORS):
        code |= (cell(i, j) >= center).astype(np.uint8) << np.uint8(k)
    return code


def feature_matrix(iis: np.ndarray, pool) -> np.ndarray:
    """Evaluate every feature of ``pool`` on a stack of base-size integrals.

    Returns ``(len(pool), n_samples)``: float64 for Haar pools, uint8 codes for
    LBP pools.
    """
    iis = np.asarray(iis)
    n, hh, ww = iis.shape
    stride = ww
    flat = iis.astype(np.int64).reshape(-1)
    base = np.arange(n, dtype=np.int64) * (hh * ww)
    if not pool:
        raise ValueError("empty feature pool")
    bw, bh = pool[0].base_window
    if (bw + 1, bh + 1) != (ww, hh):
        raise ValueError(f"samples are {ww - 1}x{hh - 1}, pool expects {bw}x{bh}")
    if isinstance(pool[0], HaarFeature):
        out = np.empty((len(pool), n), dtype=np.float64)
        for i, f in enumerate(pool):
            out[i] = haar_values(flat, base, stride, f, bw, bh)
    else:
        out = np.empty((len(pool), n), dtype=np.uint8)
        for i, f in enumerate(pool):
            out[i] = lbp_codes(flat, base, stride, f, bw, bh)
    return out


# --- feature pools ----------------------------------------------------------

def haar_pool(base_window=(16, 8), min_cell=1):
    """Two- and three-rect features built from equal cells.

    Kinds: horizontal edge, vertical edge, horizontal line (+1 -2 +1),
    vertical line. Equal cells keep the zero-sum property exact under
    scaling.
    """
    bw, bh = base_window
    out = []
    for cw in range(min_cell, bw + 1):
        for ch in range(min_cell, bh + 1):
            for y in range(0, bh - ch + 1):
                for x in range(0, bw - 2 * cw + 1):
                    out.append(HaarFeature(((Rect(x, y, cw, ch), 1), (Rect(x + cw, y, cw, ch), -1)), base_window))
                for x in range(0, bw - 3 * cw + 1):
                    out.append(HaarFeature(((Rect(x, y, cw, ch), 1), (Rect(x + cw, y, cw, ch), -2),
                                            (Rect(x + 2 * cw, y, cw, ch), 1)), base_window))
            for x in range(0, bw - cw + 1):
                for y in range(0, bh - 2 * ch + 1):
                    out.append(HaarFeature(((Rect(x, y, cw, ch), 1), (Rect(x, y + ch, cw, ch), -1)), base_window))
                for y in range(0, bh - 3 * ch + 1):
                    out.append(HaarFeature(((Rect(x, y, cw, ch), 1), (Rect(x, y + ch, cw, ch), -2),
                                            (Rect(x, y + 2 * ch, cw, ch), 1)), base_window))
    return out


def lbp_pool(base_window=(24, 24), min_cell=1):
    bw, bh = base_window
    out = []
    for cw in range(min_cell, bw // 3 + 1):
        for ch in range(min_cell, bh // 3 + 1):
            for y in range(0, bh - 3 * ch + 1):
                for x in range(0, bw - 3 * cw + 1):
                    out.append(LbpFeature(Rect(x, y, cw, ch), base_window))
    return out
