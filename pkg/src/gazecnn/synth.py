"""Seeded synthetic gaze scenes.

Gaze convention (camera-mirrored view): a subject looking to *their* right
moves both pupils toward the *image* left. The pupil's horizontal offset is
stored in subject terms, ``+DELTA`` eye widths for ``RIGHT``, ``-DELTA`` for
``LEFT``, and ``|offset| < DELTA / 3`` for ``VAGUE``; rendering places the
pupil at ``eye_center_x - offset * eye_width``. Nothing else in the package
depends on which way this convention goes.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .imaging import Rect, resize_float, write_pgm
from .preprocess import COMPOSITE, STRIP_H, EyePair, Gaze, Sample, make_sample

DELTA = 0.25


@dataclass(frozen=True)
class SubjectStyle:
    skin: float
    sclera: float
    iris: float
    eye_aspect: float   # sclera half-height / half-width before eyelid closure
    openness: float     # in (0.3, 1.0]
    noise: float        # additive Gaussian sigma, intensity units

    @classmethod
    def from_seed(cls, seed) -> "SubjectStyle":
        rng = np.random.default_rng(seed)
        return cls(
            skin=float(rng.uniform(95, 175)),
            sclera=float(rng.uniform(205, 245)),
            iris=float(rng.uniform(20, 75)),
            eye_aspect=float(rng.uniform(0.38, 0.5)),
            openness=float(rng.uniform(0.6, 1.0)),
            noise=float(rng.uniform(3, 10)),
        )


@dataclass(frozen=True)
class SceneTruth:
    face_box: Rect
    eyes: EyePair
    label: Gaze


def subject_style(seed: int, index: int) -> SubjectStyle:
    return SubjectStyle.from_seed(np.random.SeedSequence([seed, index, 0x5757]))


def _seed_for(*parts) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def gaze_offset(label, rng) -> float:
    label = Gaze(label)
    if label == Gaze.RIGHT:
        return DELTA
    if label == Gaze.LEFT:
        return -DELTA
    lim = DELTA / 3
    return float(rng.uniform(-lim, lim) * 0.999)


def render_eye(canvas: np.ndarray, cx: float, cy: float, box_w: float, box_h: float,
               style: SubjectStyle, offset: float, scale: float = 1.0) -> None:
    """Draw one eye centred at ``(cx, cy)`` into a float canvas, in place.

    Geometry is relative to the eye box: sclera half-width 0.4 box widths,
    iris radius 0.13 box widths, a dark lid line around the sclera.
    """
    ax = 0.40 * box_w * scale
    ay = min(0.44 * box_h, ax * style.eye_aspect) * style.openness
    r_iris = 0.13 * box_w * scale
    px = cx - offset * (2.0 * ax)
    lid = max(1.0, 0.07 * box_h)
    H, W = canvas.shape
    x0, x1 = max(0, int(cx - ax - lid - 2)), min(W, int(cx + ax + lid + 3))
    y0, y1 = max(0, int(cy - ay - lid - 2)), min(H, int(cy + ay + lid + 3))
    if x0 >= x1 or y0 >= y1:
        return
    yy, xx = np.mgrid[y0:y1, x0:x1]
    xx = xx + 0.5
    yy = yy + 0.5
    e = ((xx - cx) / ax) ** 2 + ((yy - cy) / ay) ** 2
    ring = ((xx - cx) / (ax + lid)) ** 2 + ((yy - cy) / (ay + lid)) ** 2
    d2 = (xx - px) ** 2 + (yy - cy) ** 2
    patch = canvas[y0:y1, x0:x1]
    patch[(ring <= 1.0) & (e > 1.0)] = style.skin * 0.45
    inside = e <= 1.0
    patch[inside] = style.sclera
    patch[inside & (d2 <= r_iris ** 2)] = style.iris
    patch[inside & (d2 <= (0.45 * r_iris) ** 2)] = style.iris * 0.4


def _finish(canvas: np.ndarray, sigma: float, rng) -> np.ndarray:
    canvas = canvas + rng.normal(0.0, sigma, canvas.shape)
    return np.clip(np.floor(canvas + 0.5), 0, 255).astype(np.uint8)


def gen_eye_pair(label, style: SubjectStyle, seed) -> np.ndarray:
    """72x72 gray composite: subject-right eye strip on top, left below."""
    rng = np.random.default_rng(seed)
    offset = gaze_offset(label, rng)
    canvas = np.full((COMPOSITE, COMPOSITE), style.skin, dtype=np.float64)
    canvas += rng.uniform(-8, 8)
    for top in (0, STRIP_H):
        cx = COMPOSITE / 2 + rng.uniform(-0.05, 0.05) * COMPOSITE
        cy = top + STRIP_H / 2 + rng.uniform(-0.08, 0.08) * STRIP_H
        # keep each eye inside its own strip
        band = canvas[top:top + STRIP_H]
        render_eye(band, cx, cy - top, COMPOSITE, STRIP_H, style, offset,
                   scale=rng.uniform(0.9, 1.1))
    return _finish(canvas, style.noise, rng)


def _background(W: int, H: int, rng) -> np.ndarray:
    coarse = rng.uniform(40, 200, size=(6, 8))
    fine = rng.uniform(-25, 25, size=(30, 40))
    return resize_float(coarse, W, H) + resize_float(fine, W, H)


def _fill_ellipse(canvas, cx, cy, ax, ay, value):
    H, W = canvas.shape
    x0, x1 = max(0, int(cx - ax - 1)), min(W, int(cx + ax + 2))
    y0, y1 = max(0, int(cy - ay - 1)), min(H, int(cy + ay + 2))
    yy, xx = np.mgrid[y0:y1, x0:x1]
    m = ((xx + 0.5 - cx) / ax) ** 2 + ((yy + 0.5 - cy) / ay) ** 2 <= 1.0
    canvas[y0:y1, x0:x1][m] = value


def _fill_rect(canvas, x, y, w, h, value):
    H, W = canvas.shape
    xa, ya = max(0, int(round(x))), max(0, int(round(y)))
    xb, yb = min(W, int(round(x + w))), min(H, int(round(y + h)))
    canvas[ya:yb, xa:xb] = value


def gen_scene(style: SubjectStyle, label, seed, size=(320, 240)):
    """Render a frame with one face and return ``(frame, SceneTruth)``."""
    W, H = size
    if W < 320 or H < 240:
        raise ValueError("scenes must be at least 320x240")
    rng = np.random.default_rng(seed)
    label = Gaze(label)
    offset = gaze_offset(label, rng)
    canvas = _background(W, H, rng)
    s = int(round(rng.uniform(0.3, 0.55) * min(W, H)))
    fx = int(rng.integers(0, W - s + 1))
    fy = int(rng.integers(0, H - s + 1))
    skin = style.skin + rng.uniform(-10, 10)
    _fill_ellipse(canvas, fx + s / 2, fy + s / 2, 0.42 * s, 0.5 * s, skin)
    # dark hairline across the top of the oval
    _fill_ellipse(canvas, fx + s / 2, fy + 0.12 * s, 0.36 * s, 0.1 * s, skin * 0.35)

    ew = int(round(0.26 * s))
    eh = int(round(ew / 2))
    boxes = []
    for rel_x in (0.30, 0.70):
        cx = fx + rel_x * s + rng.uniform(-0.015, 0.015) * s
        cy = fy + 0.40 * s + rng.uniform(-0.015, 0.015) * s
        box = Rect(int(round(cx - ew / 2)), int(round(cy - eh / 2)), ew, eh)
        bcx, bcy = box.x + ew / 2, box.y + eh / 2
        _fill_rect(canvas, bcx - 0.12 * s, box.y - 0.075 * s, 0.24 * s, 0.035 * s, skin * 0.45)
        render_eye(canvas, bcx, bcy, ew, eh, style, offset)
        boxes.append(box)
    _fill_rect(canvas, fx + 0.35 * s, fy + 0.74 * s, 0.30 * s, 0.045 * s, skin * 0.5)

    frame = _finish(canvas, style.noise, rng)
    # image-left eye is the subject's right eye
    truth = SceneTruth(Rect(fx, fy, s, s), EyePair(left_box=boxes[1], right_box=boxes[0]), label)
    return frame, truth


def scene_stream(n: int, seed: int, n_subjects: int = 30, size=(320, 240)):
    """Yield ``(frame, truth, subject_index)`` for ``n`` seeded scenes."""
    for i in range(n):
        subj = i % n_subjects
        style = subject_style(seed, subj)
        label = Gaze(_seed_for(seed, i, 1) % 3)
        yield (*gen_scene(style, label, _seed_for(seed, i, 2), size), subj)


def gen_corpus(n_subjects: int, samples_per_subject: int, seed: int) -> list[Sample]:
    """In-memory eye-pair samples; labels cycle 0,1,2 over the whole corpus."""
    out = []
    k = 0
    for subj in range(n_subjects):
        style = subject_style(seed, subj)
        for j in range(samples_per_subject):
            label = Gaze(k % 3)
            k += 1
            fseed = _seed_for(seed, subj, j, 7)
            gray = gen_eye_pair(label, style, fseed)
            out.append(make_sample(gray, label, f"s{subj:03d}", f"s{subj:03d}/{j:05d}"))
    return out


def gen_dataset(n_subjects: int, frames_per_subject_per_label: int, seed: int, out_dir):
    """Write PGM composites plus ``manifest.jsonl`` under ``out_dir``."""
    from .dataset import Manifest, ManifestEntry, save_manifest

    if n_subjects < 1 or frames_per_subject_per_label < 1:
        raise ValueError("counts must be >= 1")
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for subj in range(n_subjects):
        style = subject_style(seed, subj)
        sdir = os.path.join(out_dir, f"s{subj:03d}")
        os.makedirs(sdir, exist_ok=True)
        for label in Gaze:
            for j in range(frames_per_subject_per_label):
                fseed = _seed_for(seed, subj, int(label), j)
                rel = f"s{subj:03d}/{label.name.lower()}_{j:04d}.pgm"
                write_pgm(os.path.join(out_dir, rel), gen_eye_pair(label, style, fseed))
                entries.append(ManifestEntry(rel, int(label), f"s{subj:03d}", "original", str(fseed)))
    m = Manifest(entries, root=os.fspath(out_dir))
    save_manifest(m, os.path.join(out_dir, "manifest.jsonl"))
    return m


def write_scenes(n: int, seed: int, out_dir, n_subjects: int = 30, size=(320, 240)) -> str:
    """Write scene frames and ``truth.jsonl``; returns the truth file path."""
    os.makedirs(out_dir, exist_ok=True)
    truth_path = os.path.join(out_dir, "truth.jsonl")
    with open(truth_path, "w", encoding="utf-8") as tf:
        for i, (frame, truth, subj) in enumerate(scene_stream(n, seed, n_subjects, size)):
            name = f"frame_{i:05d}.pgm"
            write_pgm(os.path.join(out_dir, name), frame)
            tf.write(json.dumps({
                "frame": name, "subject": f"s{subj:03d}", "label": int(truth.label),
                "face": list(truth.face_box), "right_eye": list(truth.eyes.right_box),
                "left_eye": list(truth.eyes.left_box)}) + "\n")
    return truth_path


def read_scenes(out_dir):
    """Inverse of :func:`write_scenes`: list of ``(frame, SceneTruth, name)``."""
    from .imaging import read_pgm

    out = []
    with open(os.path.join(out_dir, "truth.jsonl"), encoding="utf-8") as tf:
        for line in tf:
            if not line.strip():
                continue
            d = json.loads(line)
            truth = SceneTruth(Rect(*d["face"]), EyePair(left_box=Rect(*d["left_eye"]),
                                                          right_box=Rect(*d["right_eye"])),
                               Gaze(d["label"]))
            out.append((read_pgm(os.path.join(out_dir, d["frame"])), truth, d["frame"]))
    return out
