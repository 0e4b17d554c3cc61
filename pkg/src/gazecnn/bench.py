"""Per-stage latency of the full frame -> label pipeline."""

from __future__ import annotations

import glob
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .cascade import CascadeModel
from .cnn import Network, forward, to_batch
from .errors import EyesNotFound, FaceNotFound, MalformedInputError, PreprocessFailed
from .imaging import as_gray, integral, read_pgm
from .preprocess import compose_gray, face_scan, locate_eyes, make_sample, pick_face
from .cascade.detect import detect

STAGES = ("face_detect", "eye_detect", "preprocess", "cnn_forward")
MIN_FRAMES = 30
SUM_TOLERANCE = 0.05


def _stats(ms: np.ndarray) -> dict:
    if ms.size == 0:
        return {"p50": None, "p95": None, "max": None}
    return {"p50": float(np.percentile(ms, 50)), "p95": float(np.percentile(ms, 95)),
            "max": float(ms.max())}


@dataclass
class LatencyReport:
    """Timings in milliseconds; ``samples`` holds one row per timed frame,
    columns ``STAGES + ("end_to_end",)``. Stages a frame never reached hold
    zero so each row still sums to its end-to-end time; per-stage statistics
    skip them."""
    samples: np.ndarray
    reached: np.ndarray  # stages entered per frame, 1..4
    frame_size: tuple
    threads: int = 1
    outcomes: dict = field(default_factory=dict)

    @property
    def n_frames(self) -> int:
        return int(self.samples.shape[0])

    def stage(self, name: str) -> dict:
        cols = STAGES + ("end_to_end",)
        j = cols.index(name)
        col = self.samples[:, j]
        if name in STAGES:
            col = col[self.reached > j]
        return _stats(col)

    @property
    def sum_gap(self) -> float:
        """Relative gap between summed stage time and end-to-end time."""
        total = self.samples[:, -1].sum()
        return float(abs(total - self.samples[:, :-1].sum()) / total) if total > 0 else 0.0

    @property
    def sums_consistent(self) -> bool:
        return self.sum_gap <= SUM_TOLERANCE

    def to_dict(self) -> dict:
        return {
            "frames": self.n_frames,
            "frame_size": list(self.frame_size),
            "threads": self.threads,
            "stages": {s: self.stage(s) for s in STAGES},
            "end_to_end": self.stage("end_to_end"),
            "stage_sum_gap": self.sum_gap,
            "outcomes": dict(self.outcomes),
        }

    def table(self) -> str:
        rows = [f"{'stage':<12} {'p50 ms':>9} {'p95 ms':>9} {'max ms':>9}"]
        for s in STAGES + ("end_to_end",):
            st = self.stage(s)
            if st["p50"] is None:
                rows.append(f"{s:<12} {'-':>9} {'-':>9} {'-':>9}")
            else:
                rows.append(f"{s:<12} {st['p50']:9.2f} {st['p95']:9.2f} {st['max']:9.2f}")
        w, h = self.frame_size
        rows.append(f"{self.n_frames} frames {w}x{h}, threads={self.threads}, "
                    f"stage sum gap {100 * self.sum_gap:.2f}%")
        return "\n".join(rows) + "\n"


def load_frames(frames_dir) -> list:
    paths = sorted(glob.glob(os.path.join(frames_dir, "*.pgm")))
    return [read_pgm(p) for p in paths]


def time_frame(frame, face_model: CascadeModel, eye_model: CascadeModel, net: Network):
    """Run the pipeline once; returns ``(row_ms, stages_reached, outcome, label)``."""
    state = {}

    def face():
        state["face"] = pick_face(detect(frame, face_model, face_scan(frame.shape),
                                         ii=integral(frame)))

    def eyes():
        state["eyes"] = locate_eyes(frame, state["face"], eye_model)

    def prep():
        state["sample"] = make_sample(compose_gray(frame, state["eyes"]))

    def cnn():
        state["label"] = int(np.argmax(forward(net, to_batch(state["sample"].input))[0]))

    clock = time.perf_counter_ns
    row = [0.0] * (len(STAGES) + 1)
    outcome, reached = "ok", 0
    t0 = t = clock()
    for i, step in enumerate((face, eyes, prep, cnn)):
        reached = i + 1
        try:
            step()
        except FaceNotFound:
            outcome = "face_not_found"
        except EyesNotFound:
            outcome = "eyes_not_found"
        except PreprocessFailed:
            outcome = "preprocess_failed"
        now = clock()
        row[i], t = (now - t) / 1e6, now
        if outcome != "ok":
            break
    row[-1] = (clock() - t0) / 1e6
    return row, reached, outcome, state.get("label")


def bench_pipeline(frames, face_model: CascadeModel, eye_model: CascadeModel, net: Network,
                   repetitions: int = 1, warmup: int = 5, threads: int = 1) -> LatencyReport:
    """Time every stage of every frame, ``repetitions`` passes over ``frames``.

    ``frames`` is a list of gray images or a directory of PGMs. The first
    ``warmup`` runs are discarded, so the report holds
    ``len(frames) * repetitions - warmup`` rows.
    """
    if isinstance(frames, (str, os.PathLike)):
        frames = load_frames(frames)
    frames = [as_gray(f) for f in frames]
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    total = len(frames) * repetitions
    if total < MIN_FRAMES or total <= warmup:
        raise MalformedInputError(f"benchmark needs at least {MIN_FRAMES} timed runs "
                                  f"(and more than the {warmup} warmup runs), got {total}")
    shapes = {f.shape for f in frames}
    if len(shapes) != 1:
        raise MalformedInputError(f"frames differ in size: {sorted(shapes)}")
    h, w = frames[0].shape
    rows, depth, outcomes = [], [], {}
    k = 0
    for _ in range(repetitions):
        for f in frames:
            row, reached, outcome, _ = time_frame(f, face_model, eye_model, net)
            k += 1
            if k <= warmup:
                continue
            rows.append(row)
            depth.append(reached)
            outcomes[outcome] = outcomes.get(outcome, 0) + 1
    return LatencyReport(np.array(rows, dtype=np.float64), np.array(depth, dtype=np.int64), (w, h),
                         threads, outcomes)
