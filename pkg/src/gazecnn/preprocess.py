"""Face crop -> eye pair -> 72x72 binary CNN input."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple

import numpy as np

from .cascade import CascadeModel, ScanParams, detect
from .errors import (DegenerateHistogramError, EyesNotFound, FaceNotFound, MalformedInputError,
                     PreprocessFailed)
from .imaging import Rect, as_gray, binarize_otsu, check_rect, crop, integral, resize_bilinear, round_half_up

COMPOSITE = 72
STRIP_H = 36
EYE_BAND = 0.55  # eyes are searched in the upper part of the face box


class Gaze(IntEnum):
    RIGHT = 0
    LEFT = 1
    VAGUE = 2


class EyePair(NamedTuple):
    left_box: Rect   # subject's left eye, image-right side
    right_box: Rect  # subject's right eye, image-left side


@dataclass
class Sample:
    input: np.ndarray
    label: Gaze | None = None
    subject_id: str | None = None
    source_frame: str | None = None
    gray: np.ndarray | None = field(default=None, repr=False)
    origin: str = "original"

    def __post_init__(self):
        x = np.asarray(self.input)
        if x.shape != (COMPOSITE, COMPOSITE):
            raise MalformedInputError(f"sample input must be {COMPOSITE}x{COMPOSITE}, got {x.shape}")
        if x.dtype != np.uint8:
            x = x.astype(np.uint8)
        if x.size and x.max() > 1:
            raise MalformedInputError("sample input must be binary")
        self.input = x
        if self.label is not None:
            if int(self.label) not in (0, 1, 2):
                raise MalformedInputError(f"label {self.label} out of range")
            self.label = Gaze(int(self.label))


def make_sample(gray, label=None, subject_id=None, source_frame=None, origin="original") -> Sample:
    """Binarize a gray composite and wrap it as a :class:`Sample`."""
    gray = as_gray(gray)
    try:
        binary, _ = binarize_otsu(gray)
    except DegenerateHistogramError as e:
        raise PreprocessFailed(str(e)) from None
    return Sample(binary, label, subject_id, source_frame, gray, origin)


def face_scan(frame_shape) -> ScanParams:
    """Face scan for a frame: windows start at a fifth of the short side."""
    h, w = frame_shape[:2]
    return ScanParams(min_size=max(24, round_half_up(0.2 * min(w, h))))


def eye_scan(face: Rect) -> ScanParams:
    return ScanParams(min_size=max(16, round_half_up(0.15 * face.w)),
                      max_size=max(16, round_half_up(0.45 * face.w)))


def eye_region(face: Rect) -> Rect:
    return Rect(face.x, face.y, face.w, max(1, round_half_up(EYE_BAND * face.h)))


def locate_eyes(img, face: Rect, eye_model: CascadeModel, scan: ScanParams | None = None) -> EyePair:
    """Best eye detection on each side of the face midline.

    Raises EyesNotFound unless both halves hold a detection.
    """
    img = as_gray(img)
    face = Rect(*face)
    check_rect(face, img.shape[1], img.shape[0])
    dets = detect(img, eye_model, scan or eye_scan(face), region=eye_region(face))
    mid = face.x + face.w / 2.0
    image_left = [d for d in dets if d.box.center[0] < mid]
    image_right = [d for d in dets if d.box.center[0] > mid]
    if not image_left or not image_right:
        raise EyesNotFound(f"{len(dets)} eye detection(s), need one on each side of the midline")
    return EyePair(left_box=image_right[0].box, right_box=image_left[0].box)


def compose_gray(img, eyes: EyePair) -> np.ndarray:
    """72x72 gray composite: subject-right eye on top, subject-left below."""
    img = as_gray(img)
    top = resize_bilinear(crop(img, eyes.right_box), COMPOSITE, STRIP_H)
    bottom = resize_bilinear(crop(img, eyes.left_box), COMPOSITE, STRIP_H)
    return np.vstack([top, bottom])


def compose_eye_pair(img, eyes: EyePair) -> np.ndarray:
    try:
        return binarize_otsu(compose_gray(img, eyes))[0]
    except DegenerateHistogramError as e:
        raise PreprocessFailed(str(e)) from None


def pick_face(dets) -> Rect:
    if not dets:
        raise FaceNotFound("no face detection")
    best = min(dets, key=lambda d: (-d.neighbors, -d.box.area, d.box.y, d.box.x))
    return best.box


def find_face(frame, face_model: CascadeModel, scan: ScanParams | None = None, ii=None) -> Rect:
    frame = as_gray(frame)
    if ii is None:
        ii = integral(frame)
    dets = detect(frame, face_model, scan or face_scan(frame.shape), ii=ii)
    return pick_face(dets)


def frame_to_sample(frame, face_model: CascadeModel, eye_model: CascadeModel, label=None,
                    subject_id=None, source_frame=None) -> Sample:
    """Full pipeline for one frame.

    Raises FaceNotFound, EyesNotFound or PreprocessFailed depending on which
    stage drops the frame.
    """
    frame = as_gray(frame)
    face = find_face(frame, face_model)
    eyes = locate_eyes(frame, face, eye_model)
    gray = compose_gray(frame, eyes)
    return make_sample(gray, label, subject_id, source_frame)
