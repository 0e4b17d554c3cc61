"""Train face and eye cascades from scenes with ground-truth boxes.

Positives are jittered crops of the truth boxes resized to the base window.
Negatives are bootstrapped: each stage is trained on windows that the
cascade built so far still accepts and that overlap no truth box (IoU <
``NEG_IOU``).
"""

from __future__ import annotations

import logging

import numpy as np

from .cascade import CascadeModel, lbp_pool, haar_pool, train_cascade
from .cascade.detect import scan_windows, window_sizes
from .imaging import Rect, crop, integral, resize_bilinear
from .preprocess import eye_region, eye_scan, face_scan

log = logging.getLogger(__name__)

FACE_WINDOW = (24, 24)
EYE_WINDOW = (16, 8)
NEG_IOU = 0.3


def _iou_many(xs, ys, ws, hs, t: Rect):
    ix = np.clip(np.minimum(xs + ws, t.x + t.w) - np.maximum(xs, t.x), 0, None)
    iy = np.clip(np.minimum(ys + hs, t.y + t.h) - np.maximum(ys, t.y), 0, None)
    inter = ix * iy
    return inter / (ws * hs + t.w * t.h - inter)


def accepted_windows(img, model: CascadeModel, scan, ii=None):
    """Accepted windows as four int arrays ``(x, y, w, h)`` (no grouping)."""
    if ii is None:
        ii = integral(img)
    ii64 = ii.astype(np.int64)
    H, W = ii.shape[0] - 1, ii.shape[1] - 1
    parts = []
    for w, h in window_sizes(model.base_window, W, H, scan):
        xs, ys, _ = scan_windows(ii64, model, w, h, scan.step(w))
        parts.append((xs, ys, np.full(xs.shape, w, np.int64), np.full(xs.shape, h, np.int64)))
    if not parts:
        e = np.zeros(0, np.int64)
        return e, e, e, e
    return tuple(np.concatenate(p) for p in zip(*parts))


def window_integral(img, r: Rect, base_window) -> np.ndarray:
    return integral(resize_bilinear(crop(img, r), *base_window))


def jittered(box: Rect, rng, shift: float, scale: float, width: int, height: int) -> Rect:
    s = rng.uniform(1.0 - scale, 1.0 + scale)
    w = max(1, int(round(box.w * s)))
    h = max(1, int(round(box.h * s)))
    cx = box.x + box.w / 2 + rng.uniform(-shift, shift) * box.w
    cy = box.y + box.h / 2 + rng.uniform(-shift, shift) * box.h
    x = int(round(cx - w / 2))
    y = int(round(cy - h / 2))
    x = min(max(0, x), width - w)
    y = min(max(0, y), height - h)
    return Rect(x, y, min(w, width), min(h, height))


class _Miner:
    """Collect hard negatives from ``(frame, region, truth_boxes, scan)`` items."""

    def __init__(self, items, base_window, seed, per_item=40):
        self.items = items
        self.base_window = base_window
        self.rng = np.random.default_rng(seed)
        self.per_item = per_item
        self.cursor = 0

    def __call__(self, model, n, stage_index):
        out = []
        visited = 0
        while len(out) < n and visited < len(self.items):
            frame, region, truths, scan = self.items[self.cursor]
            self.cursor = (self.cursor + 1) % len(self.items)
            visited += 1
            sub = crop(frame, region)
            xs, ys, ws, hs = accepted_windows(sub, model, scan)
            if xs.size == 0:
                continue
            xs, ys = xs + region.x, ys + region.y
            ok = np.ones(xs.shape, dtype=bool)
            for t in truths:
                ok &= _iou_many(xs, ys, ws, hs, t) < NEG_IOU
            idx = np.nonzero(ok)[0]
            if idx.size > self.per_item:
                idx = np.sort(self.rng.choice(idx, self.per_item, replace=False))
            for i in idx:
                r = Rect(int(xs[i]), int(ys[i]), int(ws[i]), int(hs[i]))
                out.append(window_integral(frame, r, self.base_window))
                if len(out) >= n:
                    break
        log.debug("stage %d: mined %d negatives from %d items", stage_index, len(out), visited)
        return np.array(out) if out else np.zeros((0, self.base_window[1] + 1, self.base_window[0] + 1), np.uint32)


def face_positives(scenes, seed=0, copies=3):
    rng = np.random.default_rng(seed)
    out = []
    for frame, truth in scenes:
        H, W = frame.shape
        out.append(window_integral(frame, truth.face_box, FACE_WINDOW))
        for _ in range(copies - 1):
            r = jittered(truth.face_box, rng, 0.04, 0.06, W, H)
            out.append(window_integral(frame, r, FACE_WINDOW))
    return np.array(out)


def eye_positives(scenes, seed=0, copies=2):
    rng = np.random.default_rng(seed)
    out = []
    for frame, truth in scenes:
        H, W = frame.shape
        for box in (truth.eyes.right_box, truth.eyes.left_box):
            for k in range(copies):
                r = box if k == 0 else jittered(box, rng, 0.05, 0.06, W, H)
                patch = resize_bilinear(crop(frame, r), *EYE_WINDOW)
                out.append(integral(patch))
                out.append(integral(patch[:, ::-1]))
    return np.array(out)


def train_face_cascade(scenes, seed=0, n_stages=12, stage_target=(0.995, 0.5), max_weak=40,
                       n_neg=1500, max_features=2000) -> CascadeModel:
    """``scenes``: sequence of ``(frame, SceneTruth)``."""
    scenes = list(scenes)
    pos = face_positives(scenes, seed)
    items = [(f, Rect(0, 0, f.shape[1], f.shape[0]), [t.face_box], face_scan(f.shape))
             for f, t in scenes]
    miner = _Miner(items, FACE_WINDOW, seed + 1)
    return train_cascade("lbp", FACE_WINDOW, pos, miner, lbp_pool(FACE_WINDOW, min_cell=2),
                         n_stages=n_stages, stage_target=stage_target, max_weak=max_weak,
                         n_neg=n_neg, max_features=max_features, seed=seed)


def _expanded(r: Rect, frac: float, W: int, H: int) -> Rect:
    dx, dy = int(round(r.w * frac)), int(round(r.h * frac))
    x0, y0 = max(0, r.x - dx), max(0, r.y - dy)
    x1, y1 = min(W, r.x + r.w + dx), min(H, r.y + r.h + dy)
    return Rect(x0, y0, x1 - x0, y1 - y0)


def train_eye_cascade(scenes, seed=0, n_stages=12, stage_target=(0.995, 0.5), max_weak=40,
                      n_neg=1500, max_features=3000) -> CascadeModel:
    scenes = list(scenes)
    pos = eye_positives(scenes, seed)
    items = []
    for f, t in scenes:
        H, W = f.shape
        region = _expanded(eye_region(t.face_box), 0.1, W, H)
        items.append((f, region, [t.eyes.left_box, t.eyes.right_box], eye_scan(t.face_box)))
    miner = _Miner(items, EYE_WINDOW, seed + 1)
    return train_cascade("haar", EYE_WINDOW, pos, miner, haar_pool(EYE_WINDOW),
                         n_stages=n_stages, stage_target=stage_target, max_weak=max_weak,
                         n_neg=n_neg, max_features=max_features, seed=seed)


def window_counts(frame, model: CascadeModel, scan, truths) -> tuple[int, int]:
    """``(accepted, scanned)`` counts over windows overlapping no truth box."""
    H, W = frame.shape
    ii64 = integral(frame).astype(np.int64)
    acc = total = 0
    for w, h in window_sizes(model.base_window, W, H, scan):
        step = scan.step(w)
        gx, gy = np.meshgrid(np.arange(0, W - w + 1, step), np.arange(0, H - h + 1, step))
        gx, gy = gx.ravel(), gy.ravel()
        neg = np.ones(gx.shape, dtype=bool)
        for t in truths:
            neg &= _iou_many(gx, gy, w, h, t) < NEG_IOU
        total += int(neg.sum())
        xs, ys, _ = scan_windows(ii64, model, w, h, step)
        if xs.size:
            ok = np.ones(xs.shape, dtype=bool)
            for t in truths:
                ok &= _iou_many(xs, ys, w, h, t) < NEG_IOU
            acc += int(ok.sum())
    return acc, total


def detection_report(scenes, face_model: CascadeModel, eye_model: CascadeModel,
                     hit_iou: float = 0.5) -> dict:
    """Face hit rate, per-window false-positive rate, and eye-pair hit rate.

    A face counts as found when the chosen detection has IoU >= ``hit_iou``
    with the truth box. Eyes are scored only on frames whose face was found,
    and count when both boxes reach ``hit_iou``.
    """
    from .errors import EyesNotFound, FaceNotFound
    from .imaging import iou
    from .preprocess import find_face, locate_eyes

    found = eyes_ok = fp = windows = 0
    for frame, truth in scenes:
        a, n = window_counts(frame, face_model, face_scan(frame.shape), [truth.face_box])
        fp += a
        windows += n
        try:
            face = find_face(frame, face_model)
        except FaceNotFound:
            continue
        if iou(face, truth.face_box) < hit_iou:
            continue
        found += 1
        try:
            pair = locate_eyes(frame, face, eye_model)
        except EyesNotFound:
            continue
        if (iou(pair.left_box, truth.eyes.left_box) >= hit_iou
                and iou(pair.right_box, truth.eyes.right_box) >= hit_iou):
            eyes_ok += 1
    n = len(scenes)
    return {"scenes": n, "face_found": found, "face_tpr": found / n if n else 0.0,
            "false_windows": fp, "negative_windows": windows,
            "window_fpr": fp / windows if windows else 0.0,
            "eyes_found": eyes_ok, "eye_rate": eyes_ok / found if found else 0.0}
