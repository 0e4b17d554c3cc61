"""Cascade model types, single-window evaluation, and the JSON file format."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import NamedTuple, Union

import numpy as np

from ..errors import CascadeParseError, CascadeValidationError
from ..imaging import Rect
from .features import HaarFeature, LbpFeature, eval_haar, eval_lbp

FORMAT_VERSION = 1


@dataclass(frozen=True)
class HaarStump:
    """Decision stump: ``left_vote`` if value < threshold else ``right_vote``."""
    feature: HaarFeature
    threshold: float
    left_vote: float
    right_vote: float


@dataclass(frozen=True)
class LbpWeak:
    """256-way lookup: ``pass_vote`` if the code is in ``mask`` else ``fail_vote``.

    ``mask`` is a 256-bit integer; bit ``c`` set means code ``c`` is a member.
    """
    feature: LbpFeature
    mask: int
    pass_vote: float
    fail_vote: float
    table: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0 <= self.mask < (1 << 256):
            raise CascadeValidationError("LBP mask must fit in 256 bits")
        bits = np.array([(self.mask >> c) & 1 for c in range(256)], dtype=bool)
        object.__setattr__(self, "table", bits)

    @staticmethod
    def mask_from_bools(bits) -> int:
        m = 0
        for c, b in enumerate(bits):
            if b:
                m |= 1 << c
        return m


WeakClassifier = Union[HaarStump, LbpWeak]


@dataclass(frozen=True)
class Stage:
    weak: tuple
    threshold: float

    def __post_init__(self):
        object.__setattr__(self, "weak", tuple(self.weak))
        if not self.weak:
            raise CascadeValidationError("a stage needs at least one weak classifier")


@dataclass(frozen=True)
class CascadeModel:
    feature_kind: str  # "haar" | "lbp"
    base_window: tuple
    stages: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "base_window", tuple(int(v) for v in self.base_window))
        object.__setattr__(self, "stages", tuple(self.stages))
        validate_cascade(self)

    @property
    def n_weak(self) -> int:
        return sum(len(s.weak) for s in self.stages)

    def with_stage(self, stage: Stage) -> "CascadeModel":
        return CascadeModel(self.feature_kind, self.base_window, self.stages + (stage,))


def validate_cascade(m: CascadeModel) -> None:
    if m.feature_kind not in ("haar", "lbp"):
        raise CascadeValidationError(f"unknown feature_kind {m.feature_kind!r}")
    if len(m.base_window) != 2 or min(m.base_window) < 1:
        raise CascadeValidationError(f"bad base_window {m.base_window}")
    want = HaarStump if m.feature_kind == "haar" else LbpWeak
    for si, stage in enumerate(m.stages):
        if not math.isfinite(stage.threshold):
            raise CascadeValidationError(f"stage {si}: non-finite threshold")
        for wi, weak in enumerate(stage.weak):
            where = f"stage {si}, weak {wi}"
            if not isinstance(weak, want):
                raise CascadeValidationError(f"{where}: {type(weak).__name__} in a {m.feature_kind} cascade")
            if weak.feature.base_window != m.base_window:
                raise CascadeValidationError(f"{where}: feature declared for window {weak.feature.base_window}")
            votes = ((weak.left_vote, weak.right_vote) if want is HaarStump
                     else (weak.pass_vote, weak.fail_vote))
            if not all(math.isfinite(v) for v in votes):
                raise CascadeValidationError(f"{where}: non-finite vote")


class EvalCounter:
    """Counts weak-classifier evaluations made by :func:`eval_cascade`."""

    def __init__(self):
        self.weak_evals = 0


class CascadeResult(NamedTuple):
    accepted: bool
    stages_passed: int
    score: float


def weak_vote(ii: np.ndarray, weak, window: Rect) -> float:
    if isinstance(weak, HaarStump):
        v = eval_haar(ii, weak.feature, window)
        return weak.left_vote if v < weak.threshold else weak.right_vote
    code = eval_lbp(ii, weak.feature, window)
    return weak.pass_vote if weak.table[code] else weak.fail_vote


def eval_cascade(ii: np.ndarray, model: CascadeModel, window: Rect,
                 counter: EvalCounter | None = None) -> CascadeResult:
    """Run the stages in order, stopping at the first one below threshold.

    ``score`` is the vote sum of the last stage evaluated (0.0 for an empty
    model).
    """
    window = Rect(*window)
    score = 0.0
    for si, stage in enumerate(model.stages):
        s = 0.0
        for weak in stage.weak:
            s += weak_vote(ii, weak, window)
            if counter is not None:
                counter.weak_evals += 1
        score = s
        if s < stage.threshold:
            return CascadeResult(False, si, score)
    return CascadeResult(True, len(model.stages), score)


# --- serialization -----------------------------------------------------------

def _weak_to_json(w) -> dict:
    if isinstance(w, HaarStump):
        return {"rects": [[r.x, r.y, r.w, r.h, wt] for r, wt in w.feature.rects],
                "threshold": w.threshold, "left": w.left_vote, "right": w.right_vote}
    return {"cell": list(w.feature.cell), "mask": format(w.mask, "064x"),
            "pass": w.pass_vote, "fail": w.fail_vote}


def cascade_to_dict(m: CascadeModel) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "feature_kind": m.feature_kind,
        "base_window": list(m.base_window),
        "stages": [{"threshold": s.threshold, "weak": [_weak_to_json(w) for w in s.weak]}
                   for s in m.stages],
    }


def dumps_cascade(m: CascadeModel) -> str:
    return json.dumps(cascade_to_dict(m), indent=1) + "\n"


def _num(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise CascadeValidationError(f"{where}: expected a number, got {v!r}")
    return float(v)


def _weak_from_json(d, kind, base, where):
    if not isinstance(d, dict):
        raise CascadeValidationError(f"{where}: weak classifier must be an object")
    try:
        if kind == "haar":
            rects = []
            for r in d["rects"]:
                if len(r) != 5 or not all(isinstance(v, int) and not isinstance(v, bool) for v in r):
                    raise CascadeValidationError(f"{where}: rect entries are [x, y, w, h, weight] integers")
                rects.append((Rect(*r[:4]), r[4]))
            feat = HaarFeature(tuple(rects), base)
            return HaarStump(feat, _num(d["threshold"], where), _num(d["left"], where), _num(d["right"], where))
        cell = d["cell"]
        if len(cell) != 4 or not all(isinstance(v, int) and not isinstance(v, bool) for v in cell):
            raise CascadeValidationError(f"{where}: cell must be [x, y, w, h] integers")
        mask = d["mask"]
        if not isinstance(mask, str) or len(mask) != 64:
            raise CascadeValidationError(f"{where}: mask must be 64 hex characters")
        try:
            mask_int = int(mask, 16)
        except ValueError:
            raise CascadeValidationError(f"{where}: mask is not hexadecimal") from None
        return LbpWeak(LbpFeature(Rect(*cell), base), mask_int, _num(d["pass"], where), _num(d["fail"], where))
    except KeyError as e:
        raise CascadeValidationError(f"{where}: missing field {e}") from None
    except CascadeValidationError as e:
        msg = str(e)
        if not msg.startswith(where):
            msg = f"{where}: {msg}"
        raise CascadeValidationError(msg) from None


def cascade_from_dict(d) -> CascadeModel:
    if not isinstance(d, dict):
        raise CascadeValidationError("cascade file must hold a JSON object")
    if d.get("format_version") != FORMAT_VERSION:
        raise CascadeValidationError(f"unsupported format_version {d.get('format_version')!r}")
    kind = d.get("feature_kind")
    if kind not in ("haar", "lbp"):
        raise CascadeValidationError(f"unknown feature_kind {kind!r}")
    base = d.get("base_window")
    if (not isinstance(base, list) or len(base) != 2
            or not all(isinstance(v, int) and v >= 1 for v in base)):
        raise CascadeValidationError(f"bad base_window {base!r}")
    base = tuple(base)
    stages = []
    for si, s in enumerate(d.get("stages", [])):
        if not isinstance(s, dict) or "weak" not in s or "threshold" not in s:
            raise CascadeValidationError(f"stage {si}: needs 'threshold' and 'weak'")
        weak = [_weak_from_json(w, kind, base, f"stage {si}, weak {wi}") for wi, w in enumerate(s["weak"])]
        if not weak:
            raise CascadeValidationError(f"stage {si}: no weak classifiers")
        stages.append(Stage(tuple(weak), _num(s["threshold"], f"stage {si}")))
    return CascadeModel(kind, base, tuple(stages))


def loads_cascade(text: str | bytes) -> CascadeModel:
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as e:
            raise CascadeParseError("cascade file is not UTF-8", e.start) from None
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        # json reports a character position; convert to a byte offset
        raise CascadeParseError(f"malformed cascade JSON: {e.msg}", len(text[:e.pos].encode("utf-8"))) from None
    return cascade_from_dict(d)


def save_cascade(model: CascadeModel, sink) -> None:
    text = dumps_cascade(model)
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "w", encoding="utf-8") as f:
            f.write(text)
    else:
        sink.write(text)


def load_cascade(source) -> CascadeModel:
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as f:
            return loads_cascade(f.read())
    return loads_cascade(source.read())
