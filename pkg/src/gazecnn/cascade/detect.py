"""Multi-scale sliding-window detection and detection grouping."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from ..imaging import Rect, as_gray, crop, integral, round_half_up
from .features import haar_values, lbp_codes
from .model import CascadeModel, HaarStump


@dataclass(frozen=True)
class ScanParams:
    scale_factor: float = 1.2
    step_fraction: float = 0.05
    min_neighbors: int = 3
    iou_thresh: float = 0.3
    min_size: int | None = None  # smallest window width scanned
    max_size: int | None = None

    def step(self, win_w: int) -> int:
        return max(1, round_half_up(self.step_fraction * win_w))


class Detection(NamedTuple):
    box: Rect
    score: float
    neighbors: int


def window_sizes(base_window, img_w: int, img_h: int, scan: ScanParams):
    """Window sizes from the base window upward by ``scale_factor``."""
    bw, bh = base_window
    sizes = []
    k = 0
    while True:
        s = scan.scale_factor ** k
        w, h = round_half_up(bw * s), round_half_up(bh * s)
        k += 1
        if w > img_w or h > img_h or (scan.max_size is not None and w > scan.max_size):
            break
        if scan.min_size is not None and w < scan.min_size:
            continue
        if sizes and sizes[-1] == (w, h):
            continue
        sizes.append((w, h))
    return sizes


def _stage_votes(flat, base, stride, stage, win_w, win_h):
    s = np.zeros(base.shape, dtype=np.float64)
    for weak in stage.weak:
        if isinstance(weak, HaarStump):
            v = haar_values(flat, base, stride, weak.feature, win_w, win_h)
            vote = np.where(v < weak.threshold, weak.left_vote, weak.right_vote)
        else:
            code = lbp_codes(flat, base, stride, weak.feature, win_w, win_h)
            vote = np.where(weak.table[code], weak.pass_vote, weak.fail_vote)
        s = s + vote
    return s


def scan_windows(ii: np.ndarray, model: CascadeModel, win_w: int, win_h: int, step: int):
    """Evaluate the cascade on every ``win_w x win_h`` window on a ``step`` grid.

    Returns ``(xs, ys, scores)`` of accepted windows. Same semantics as
    :func:`eval_cascade`; stages only see windows that passed the previous
    ones.
    """
    H, W = ii.shape[0] - 1, ii.shape[1] - 1
    stride = W + 1
    ys = np.arange(0, H - win_h + 1, step, dtype=np.int64)
    xs = np.arange(0, W - win_w + 1, step, dtype=np.int64)
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    gy, gx = gy.ravel(), gx.ravel()
    flat = ii.astype(np.int64).ravel() if ii.dtype != np.int64 else ii.ravel()
    base = gy * stride + gx
    score = np.zeros(base.shape, dtype=np.float64)
    for stage in model.stages:
        if base.size == 0:
            break
        s = _stage_votes(flat, base, stride, stage, win_w, win_h)
        keep = ~(s < stage.threshold)
        base, gx, gy, score = base[keep], gx[keep], gy[keep], s[keep]
    return gx, gy, score


def raw_detections(img, model: CascadeModel, scan: ScanParams | None = None, ii=None):
    """All accepted windows over all scales, as ``(rects, scores)``."""
    scan = scan or ScanParams()
    if ii is None:
        ii = integral(img)
    ii64 = ii.astype(np.int64)
    H, W = ii.shape[0] - 1, ii.shape[1] - 1
    rects, scores = [], []
    for w, h in window_sizes(model.base_window, W, H, scan):
        xs, ys, sc = scan_windows(ii64, model, w, h, scan.step(w))
        rects.extend(Rect(int(x), int(y), w, h) for x, y in zip(xs, ys))
        scores.extend(float(v) for v in sc)
    return rects, scores


def detect(img, model: CascadeModel, scan: ScanParams | None = None, *,
           region: Rect | None = None, ii=None) -> list[Detection]:
    """Scan ``img`` (or ``region`` of it) and return grouped detections.

    Boxes are in full-image coordinates. An image smaller than the base
    window yields no detections.
    """
    scan = scan or ScanParams()
    ox = oy = 0
    if region is not None:
        region = Rect(*region)
        img = crop(img, region)
        ox, oy = region.x, region.y
        ii = None
    elif ii is None:
        img = as_gray(img)
    if ii is None:
        h, w = img.shape
        if w < model.base_window[0] or h < model.base_window[1]:
            return []
        ii = integral(img)
    rects, scores = raw_detections(None, model, scan, ii=ii)
    dets = group_detections(rects, scan.min_neighbors, scan.iou_thresh, scores=scores)
    if ox or oy:
        dets = [Detection(Rect(d.box.x + ox, d.box.y + oy, d.box.w, d.box.h), d.score, d.neighbors)
                for d in dets]
    return dets


# --- grouping ----------------------------------------------------------------

def _iou_matrix(boxes: np.ndarray) -> np.ndarray:
    x0, y0 = boxes[:, 0], boxes[:, 1]
    x1, y1 = x0 + boxes[:, 2], y0 + boxes[:, 3]
    ix = np.clip(np.minimum(x1[:, None], x1[None, :]) - np.maximum(x0[:, None], x0[None, :]), 0, None)
    iy = np.clip(np.minimum(y1[:, None], y1[None, :]) - np.maximum(y0[:, None], y0[None, :]), 0, None)
    inter = ix * iy
    area = boxes[:, 2] * boxes[:, 3]
    union = area[:, None] + area[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(union > 0, inter / np.where(union > 0, union, 1), 0.0)
    return out


def _components(adj: np.ndarray) -> list[list[int]]:
    n = adj.shape[0]
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in zip(*np.nonzero(np.triu(adj, 1))):
        ri, rj = find(int(i)), find(int(j))
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return sorted(groups.values(), key=lambda g: g[0])


def _mean_box(boxes: np.ndarray, weights: np.ndarray) -> Rect:
    # exact integer round-half-up of the weighted mean
    total = int(weights.sum())
    vals = []
    for col in range(4):
        num = int((boxes[:, col] * weights).sum())
        vals.append((2 * num + total) // (2 * total))
    return Rect(*vals)


def group_detections(raw: Sequence, min_neighbors: int = 3, iou_thresh: float = 0.3,
                     scores: Sequence[float] | None = None) -> list[Detection]:
    """Cluster boxes by transitive IoU and average each cluster.

    Inputs may be :class:`Rect` (weight 1) or :class:`Detection` (weight =
    ``neighbors``). Clusters whose total weight is below ``min_neighbors`` are
    dropped. Surviving clusters whose mean boxes still overlap at
    ``iou_thresh`` are merged until none do, which makes regrouping the output
    a no-op. Output is sorted by neighbors, then score (both descending), then
    position, and does not depend on input order.
    """
    if not 0.0 < iou_thresh < 1.0:
        raise ValueError("iou_thresh must lie in (0, 1)")
    items = []
    for i, r in enumerate(raw):
        if isinstance(r, Detection):
            items.append((tuple(r.box), int(r.neighbors), float(r.score)))
        else:
            items.append((tuple(Rect(*r)), 1, float(scores[i]) if scores is not None else 0.0))
    if not items:
        return []
    items.sort()
    boxes = np.array([it[0] for it in items], dtype=np.int64)
    weights = np.array([it[1] for it in items], dtype=np.int64)
    sc = np.array([it[2] for it in items], dtype=np.float64)

    clusters = _components(_iou_matrix(boxes) >= iou_thresh)
    clusters = [c for c in clusters if weights[c].sum() >= min_neighbors]
    while True:
        means = [_mean_box(boxes[c], weights[c]) for c in clusters]
        if len(means) < 2:
            break
        adj = _iou_matrix(np.array(means, dtype=np.int64)) >= iou_thresh
        np.fill_diagonal(adj, False)
        if not adj.any():
            break
        clusters = [sorted(i for k in g for i in clusters[k]) for g in _components(adj)]
    out = [Detection(m, float(sc[c].max()), int(weights[c].sum())) for m, c in zip(means, clusters)]
    out.sort(key=lambda d: (-d.neighbors, -d.score, d.box.y, d.box.x, d.box.h, d.box.w))
    return out
