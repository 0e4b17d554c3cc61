"""Manifests, augmentation, and train/test partitions.

A manifest is JSON-lines, one entry per line::

    {"path": "s000/right_0000.pgm", "label": 0, "subject": "s000",
     "origin": "original", "seed_tag": "123"}

Paths are relative to the manifest's directory. The referenced PGMs are the
gray 72x72 composites; binarization happens on load so augmentation can work
on gray values.
"""

from __future__ import annotations

import json
import math
import os
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ManifestError, SplitError
from .imaging import as_gray, read_pgm
from .preprocess import COMPOSITE, STRIP_H, Gaze, Sample, make_sample

ORIGINS = ("original", "augmented")
AUG_OPS = ("translate", "rotate", "brightness", "contrast", "horizontal_flip")


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: int
    subject_id: str
    origin: str = "original"
    seed_tag: str = ""


@dataclass
class Manifest:
    entries: list = field(default_factory=list)
    root: str = "."

    def __post_init__(self):
        seen = set()
        for i, e in enumerate(self.entries, 1):
            _validate_entry(e, i)
            if e.path in seen:
                raise ManifestError(f"duplicate path {e.path!r}", i)
            seen.add(e.path)

    def __len__(self):
        return len(self.entries)

    @property
    def labels(self) -> np.ndarray:
        return np.array([e.label for e in self.entries], dtype=np.int64)

    def resolve(self, entry: ManifestEntry) -> str:
        return os.path.join(self.root, entry.path)

    def subset(self, indices) -> "Manifest":
        return Manifest([self.entries[i] for i in indices], self.root)

    def relocate(self, new_root: str) -> "Manifest":
        """Same entries with paths rewritten relative to ``new_root``."""
        moved = [replace(e, path=os.path.relpath(os.path.join(self.root, e.path), new_root)
                         .replace(os.sep, "/"))
                 for e in self.entries]
        return Manifest(moved, new_root)


def _validate_entry(e: ManifestEntry, line: int) -> None:
    if not isinstance(e.path, str) or not e.path:
        raise ManifestError("missing path", line)
    if isinstance(e.label, bool) or not isinstance(e.label, int) or e.label not in (0, 1, 2):
        raise ManifestError(f"bad label {e.label!r}", line)
    if not isinstance(e.subject_id, str) or not e.subject_id:
        raise ManifestError("missing subject", line)
    if e.origin not in ORIGINS:
        raise ManifestError(f"bad origin {e.origin!r}", line)


def manifest_lines(m: Manifest) -> str:
    return "".join(json.dumps({"path": e.path, "label": e.label, "subject": e.subject_id,
                               "origin": e.origin, "seed_tag": e.seed_tag}) + "\n"
                   for e in m.entries)


def save_manifest(m: Manifest, sink) -> None:
    text = manifest_lines(m)
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "w", encoding="utf-8") as f:
            f.write(text)
    else:
        sink.write(text)


def parse_manifest(text: str, root: str = ".") -> Manifest:
    entries, seen = [], set()
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
        except json.JSONDecodeError as e:
            raise ManifestError(f"invalid JSON: {e.msg}", lineno) from None
        if not isinstance(d, dict):
            raise ManifestError("entry must be a JSON object", lineno)
        if "subject" not in d:
            raise ManifestError("missing subject", lineno)
        e = ManifestEntry(d.get("path", ""), d.get("label"), d["subject"],
                          d.get("origin", "original"), str(d.get("seed_tag", "")))
        _validate_entry(e, lineno)
        if e.path in seen:
            raise ManifestError(f"duplicate path {e.path!r}", lineno)
        seen.add(e.path)
        entries.append(e)
    return Manifest(entries, root)


def load_manifest(source) -> Manifest:
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as f:
            return parse_manifest(f.read(), os.path.dirname(os.path.abspath(source)))
    return parse_manifest(source.read())


def load_samples(m: Manifest):
    """Read every entry's composite; returns ``(x, y)`` ready for training."""
    x = np.empty((len(m), 1, COMPOSITE, COMPOSITE), dtype=np.float32)
    for i, e in enumerate(m.entries):
        img = read_pgm(m.resolve(e))
        if img.shape != (COMPOSITE, COMPOSITE):
            raise ManifestError(f"{e.path}: image is {img.shape[1]}x{img.shape[0]}, expected 72x72", i + 1)
        x[i, 0] = make_sample(img).input
    return x, m.labels


def samples_to_arrays(samples):
    x = np.stack([s.input for s in samples]).astype(np.float32)[:, None]
    y = np.array([int(s.label) for s in samples], dtype=np.int64)
    return x, y


def samples_manifest(samples, prefix="mem") -> Manifest:
    """Manifest view of in-memory samples (paths are placeholders)."""
    return Manifest([ManifestEntry(f"{prefix}/{i:06d}.pgm", int(s.label), s.subject_id or "unknown",
                                   s.origin, s.source_frame or "")
                     for i, s in enumerate(samples)])


# --- augmentation ---------------------------------------------------------------

@dataclass(frozen=True)
class AugmentConfig:
    multiplier: int = 159
    ops: frozenset = frozenset(AUG_OPS)
    seed: int = 42
    max_shift: int = 3
    max_rotate_deg: float = 8.0
    max_brightness: float = 25.0
    contrast_range: tuple = (0.8, 1.2)

    def __post_init__(self):
        object.__setattr__(self, "ops", frozenset(self.ops))
        if self.multiplier < 1:
            raise ValueError("multiplier must be >= 1")
        unknown = self.ops - set(AUG_OPS)
        if unknown:
            raise ValueError(f"unknown augmentation ops {sorted(unknown)}")


def flip_gray(gray: np.ndarray) -> np.ndarray:
    """Mirror a composite: the eyes trade places and each is mirrored."""
    top, bottom = gray[:STRIP_H], gray[STRIP_H:]
    return np.vstack([bottom[:, ::-1], top[:, ::-1]])


FLIP_LABEL = {Gaze.RIGHT: Gaze.LEFT, Gaze.LEFT: Gaze.RIGHT, Gaze.VAGUE: Gaze.VAGUE}


def hflip(sample: Sample) -> Sample:
    gray = flip_gray(sample.gray) if sample.gray is not None else None
    inp = flip_gray(sample.input)
    label = FLIP_LABEL[sample.label] if sample.label is not None else None
    return replace(sample, input=inp, gray=gray, label=label)


def _warp(gray: np.ndarray, dx: float, dy: float, angle_deg: float) -> np.ndarray:
    """Rotate about the centre then translate; bilinear with edge clamping."""
    h, w = gray.shape
    src = gray.astype(np.float64)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    t = math.radians(angle_deg)
    c, s = math.cos(t), math.sin(t)
    # inverse mapping from destination to source
    xr, yr = xx - dx - cx, yy - dy - cy
    sx = np.clip(c * xr + s * yr + cx, 0, w - 1)
    sy = np.clip(-s * xr + c * yr + cy, 0, h - 1)
    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx, fy = sx - x0, sy - y0
    return ((1 - fy) * ((1 - fx) * src[y0, x0] + fx * src[y0, x1])
            + fy * ((1 - fx) * src[y1, x0] + fx * src[y1, x1]))


def _stream(cfg: AugmentConfig, sample: Sample, index: int):
    key = zlib.crc32((sample.source_frame or "").encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([cfg.seed, key, index]))


def augment(sample: Sample, cfg: AugmentConfig) -> list[Sample]:
    """``cfg.multiplier`` variants of ``sample``.

    Variant ``i`` is drawn from a stream seeded by ``(cfg.seed, crc32 of
    source_frame, i)`` so samples can be augmented independently and in any
    order.
    """
    if not cfg.ops:
        return [sample for _ in range(cfg.multiplier)]
    if sample.gray is None:
        raise ValueError("augmentation needs the gray composite (sample.gray)")
    out = []
    for i in range(cfg.multiplier):
        rng = _stream(cfg, sample, i)
        g = sample.gray.astype(np.float64)
        dx = dy = angle = 0.0
        if "translate" in cfg.ops:
            dx, dy = (float(v) for v in rng.integers(-cfg.max_shift, cfg.max_shift + 1, size=2))
        if "rotate" in cfg.ops:
            angle = rng.uniform(-cfg.max_rotate_deg, cfg.max_rotate_deg)
        if dx or dy or angle:
            g = _warp(g, dx, dy, angle)
        if "contrast" in cfg.ops:
            g = (g - g.mean()) * rng.uniform(*cfg.contrast_range) + g.mean()
        if "brightness" in cfg.ops:
            g = g + rng.uniform(-cfg.max_brightness, cfg.max_brightness)
        gray = as_gray(np.clip(np.floor(g + 0.5), 0, 255))
        label = sample.label
        if "horizontal_flip" in cfg.ops and rng.random() < 0.5:
            gray = flip_gray(gray)
            label = FLIP_LABEL[label] if label is not None else None
        tag = f"{sample.source_frame or ''}#aug{i}"
        out.append(make_sample(gray, label, sample.subject_id, tag, origin="augmented"))
    return out


# --- partitions -----------------------------------------------------------------

@dataclass(frozen=True)
class Split:
    train: tuple
    test: tuple


@dataclass(frozen=True)
class FoldPlan:
    folds: tuple
    subjects: tuple  # test subjects of each fold

    @property
    def k(self) -> int:
        return len(self.folds)


def _labels_of(m) -> np.ndarray:
    return m.labels if isinstance(m, Manifest) else np.asarray(m, dtype=np.int64)


def split_shuffle(m, test_fraction: float, seed: int = 42, stratify: bool = True) -> Split:
    """Seeded shuffle split with ``round(N * test_fraction)`` test entries.

    With ``stratify`` each class contributes ``floor(n_c * f)`` test entries
    plus one for the classes with the largest remainders, so per-class counts
    are within one sample of the target and the total is exact.
    """
    if not 0.0 < test_fraction < 1.0:
        raise SplitError("test_fraction must lie in (0, 1)")
    labels = _labels_of(m)
    n = len(labels)
    n_test = int(math.floor(n * test_fraction + 0.5))
    rng = np.random.default_rng(seed)
    if not stratify:
        perm = rng.permutation(n)
        test = np.sort(perm[:n_test])
    else:
        classes = (0, 1, 2)
        counts = [int(np.sum(labels == c)) for c in classes]
        if n and 0 in counts:
            raise SplitError(f"stratified split needs every class present, got counts {counts}")
        exact = [c * test_fraction for c in counts]
        quota = [int(math.floor(v)) for v in exact]
        rest = n_test - sum(quota)
        by_remainder = sorted(range(len(classes)), key=lambda i: (-(exact[i] - quota[i]), i))
        for i in by_remainder[:rest]:
            quota[i] += 1
        picks = []
        for c, q in zip(classes, quota):
            idx = np.nonzero(labels == c)[0]
            picks.append(rng.permutation(idx)[:q])
        test = np.sort(np.concatenate(picks)) if picks else np.zeros(0, np.int64)
    mask = np.zeros(n, dtype=bool)
    mask[test] = True
    return Split(tuple(int(i) for i in np.nonzero(~mask)[0]), tuple(int(i) for i in test))


def grouped_kfold(m, k: int, seed: int = 42) -> FoldPlan:
    """Subjects shuffled by ``seed`` and dealt round-robin into ``k`` folds."""
    subjects = ([e.subject_id for e in m.entries] if isinstance(m, Manifest) else list(m))
    distinct = sorted(set(subjects))
    if k < 2:
        raise SplitError("k must be >= 2")
    if len(distinct) < k:
        raise SplitError(f"{len(distinct)} subjects cannot fill {k} folds")
    order = np.random.default_rng(seed).permutation(len(distinct))
    fold_of = {distinct[j]: r % k for r, j in enumerate(order)}
    assign = np.array([fold_of[s] for s in subjects], dtype=np.int64)
    folds, fold_subjects = [], []
    for i in range(k):
        test = np.nonzero(assign == i)[0]
        train = np.nonzero(assign != i)[0]
        folds.append(Split(tuple(int(v) for v in train), tuple(int(v) for v in test)))
        fold_subjects.append(tuple(sorted(s for s, f in fold_of.items() if f == i)))
    return FoldPlan(tuple(folds), tuple(fold_subjects))
