import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import gazecnn.preprocess as pp
from gazecnn.cascade import CascadeModel, Detection
from gazecnn.errors import EyesNotFound, FaceNotFound, MalformedInputError, PreprocessFailed
from gazecnn.imaging import Rect, iou
from gazecnn.preprocess import (EyePair, Gaze, Sample, compose_eye_pair, eye_region, eye_scan, face_scan,
                                frame_to_sample, locate_eyes, make_sample, pick_face)
from gazecnn.synth import gen_scene, subject_style

FACE = Rect(40, 30, 100, 100)
ANY_EYE = CascadeModel("haar", (16, 8), ())


def fake_detect(dets):
    def run(img, model, scan=None, region=None, ii=None):
        return list(dets)
    return run


def det(x, y, w=20, h=10, n=3, score=1.0):
    return Detection(Rect(x, y, w, h), score, n)


def test_sample_invariants():
    Sample(np.zeros((72, 72), np.uint8), 2)
    with pytest.raises(MalformedInputError):
        Sample(np.zeros((72, 71), np.uint8))
    with pytest.raises(MalformedInputError):
        Sample(np.full((72, 72), 2, np.uint8))
    with pytest.raises(MalformedInputError):
        Sample(np.zeros((72, 72), np.uint8), 3)
    assert Sample(np.zeros((72, 72), np.uint8), 1).label is Gaze.LEFT


def test_compose_layout_two_level():
    img = np.full((120, 200), 90, np.uint8)
    eyes = EyePair(left_box=Rect(120, 40, 30, 15), right_box=Rect(30, 40, 30, 15))
    img[40:55, 30:60] = 255
    img[40:55, 120:150] = 0
    out = compose_eye_pair(img, eyes)
    assert out.shape == (72, 72)
    assert (out[:36] == 1).all() and (out[36:] == 0).all()
    assert np.array_equal(out, compose_eye_pair(img.copy(), eyes))


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_compose_always_72_binary(seed):
    r = np.random.default_rng(seed)
    img = r.integers(0, 256, (90, 120), dtype=np.uint8)
    boxes = [Rect(int(r.integers(0, 100)), int(r.integers(0, 80)), 0, 0) for _ in range(2)]
    boxes = [Rect(b.x, b.y, int(r.integers(1, 121 - b.x)), int(r.integers(1, 91 - b.y))) for b in boxes]
    try:
        out = compose_eye_pair(img, EyePair(*boxes))
    except PreprocessFailed:
        return
    assert out.shape == (72, 72) and set(np.unique(out)) <= {0, 1}


def test_flat_composite_fails():
    with pytest.raises(PreprocessFailed):
        compose_eye_pair(np.full((50, 50), 7, np.uint8), EyePair(Rect(0, 0, 10, 5), Rect(20, 0, 10, 5)))
    with pytest.raises(PreprocessFailed):
        make_sample(np.zeros((72, 72), np.uint8))


def test_locate_eyes_midline_rule(monkeypatch):
    img = np.zeros((200, 200), np.uint8)
    # best detection on each side wins; image-left goes to right_box
    dets = [det(50, 50, n=5), det(100, 52, n=4), det(48, 50, n=2), det(105, 55, n=1)]
    monkeypatch.setattr(pp, "detect", fake_detect(dets))
    pair = locate_eyes(img, FACE, ANY_EYE)
    assert pair.right_box == dets[0].box and pair.left_box == dets[1].box
    assert pair.right_box.center[0] < pair.left_box.center[0]

    monkeypatch.setattr(pp, "detect", fake_detect([]))
    with pytest.raises(EyesNotFound):
        locate_eyes(img, FACE, ANY_EYE)
    monkeypatch.setattr(pp, "detect", fake_detect([det(45, 50), det(60, 55)]))
    with pytest.raises(EyesNotFound):
        locate_eyes(img, FACE, ANY_EYE)


def test_locate_eyes_searches_upper_band(monkeypatch):
    seen = {}

    def run(img, model, scan=None, region=None, ii=None):
        seen["region"] = region
        return []
    monkeypatch.setattr(pp, "detect", run)
    with pytest.raises(EyesNotFound):
        locate_eyes(np.zeros((200, 200), np.uint8), FACE, ANY_EYE)
    assert seen["region"] == Rect(40, 30, 100, 55) == eye_region(FACE)


def test_pick_face_tie_breaks():
    a, b = det(100, 10, 40, 40), det(10, 10, 40, 40)
    assert pick_face([a, b]) == b.box
    assert pick_face([det(10, 50, 40, 40), det(90, 10, 40, 40)]).y == 10
    assert pick_face([det(0, 0, 30, 30, n=2), det(0, 0, 40, 40, n=2)]).w == 40
    assert pick_face([det(0, 0, 50, 50, n=2), det(0, 0, 20, 20, n=9)]).w == 20
    with pytest.raises(FaceNotFound):
        pick_face([])


def test_scan_params():
    assert face_scan((240, 320)).min_size == 48
    assert face_scan((60, 80)).min_size == 24
    s = eye_scan(Rect(0, 0, 100, 100))
    assert (s.min_size, s.max_size) == (16, 45)


def test_blank_frame_has_no_face(cascades):
    face_model, eye_model = cascades
    with pytest.raises(FaceNotFound):
        frame_to_sample(np.zeros((240, 320), np.uint8), face_model, eye_model)


def test_scene_to_sample(cascades):
    face_model, eye_model = cascades
    good = hits = 0
    for i in range(12):
        frame, truth = gen_scene(subject_style(5, i), i % 3, 700 + i)
        try:
            s = frame_to_sample(frame, face_model, eye_model, label=truth.label, subject_id="s", source_frame=str(i))
        except (FaceNotFound, EyesNotFound):
            continue
        good += 1
        assert s.label == truth.label and s.input.shape == (72, 72)
        again = frame_to_sample(frame.copy(), face_model, eye_model, label=truth.label, subject_id="s",
                                source_frame=str(i))
        assert np.array_equal(again.input, s.input)
        face = pp.find_face(frame, face_model)
        eyes = locate_eyes(frame, face, eye_model)
        hits += iou(eyes.right_box, truth.eyes.right_box) >= 0.5 and iou(eyes.left_box, truth.eyes.left_box) >= 0.5
    assert good >= 10 and hits >= good - 1
