import io
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from gazecnn.errors import BoundsError, DegenerateHistogramError, MalformedInputError
from gazecnn.imaging import (Rect, binarize_otsu, crop, decode_pgm, encode_pgm, integral, iou,
                             otsu_threshold, read_pgm, rect_sum, resize_bilinear, to_grayscale,
                             write_pgm)

images = hnp.arrays(np.uint8, hnp.array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=24))


def brute_sum(img, r):
    s = 0
    for y in range(r.y, r.y + r.h):
        for x in range(r.x, r.x + r.w):
            s += int(img[y, x])
    return s


def brute_bilinear(img, out_w, out_h):
    # exact rationals so half-way cases round the same way every time
    h, w = img.shape
    out = np.zeros((out_h, out_w), np.uint8)
    for j in range(out_h):
        for i in range(out_w):
            sy = min(max(Fraction(2 * j + 1, 2) * Fraction(h, out_h) - Fraction(1, 2), 0), h - 1)
            sx = min(max(Fraction(2 * i + 1, 2) * Fraction(w, out_w) - Fraction(1, 2), 0), w - 1)
            y0, x0 = math.floor(sy), math.floor(sx)
            y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
            fy, fx = sy - y0, sx - x0
            top = (1 - fx) * int(img[y0, x0]) + fx * int(img[y0, x1])
            bot = (1 - fx) * int(img[y1, x0]) + fx * int(img[y1, x1])
            out[j, i] = math.floor((1 - fy) * top + fy * bot + Fraction(1, 2))
    return out


def brute_otsu(img):
    # direct between-class variance for every threshold
    v = [int(p) for p in img.ravel()]
    best, best_t = Fraction(-1), None
    for t in range(256):
        lo = [p for p in v if p <= t]
        hi = [p for p in v if p > t]
        if not lo or not hi:
            continue
        w0, w1 = Fraction(len(lo), len(v)), Fraction(len(hi), len(v))
        var = w0 * w1 * (Fraction(sum(lo), len(lo)) - Fraction(sum(hi), len(hi))) ** 2
        if var > best:
            best, best_t = var, t
    return best_t


# --- grayscale ---------------------------------------------------------------

def test_grayscale_examples():
    px = np.array([[[100, 100, 100], [255, 0, 0]]], dtype=np.uint8)
    assert to_grayscale(px).tolist() == [[100, 76]]


def test_grayscale_equal_channels_all_values():
    v = np.arange(256, dtype=np.uint8)
    rgb = np.stack([v, v, v], axis=-1)[None]
    assert np.array_equal(to_grayscale(rgb)[0], v)


def test_grayscale_flat_buffer():
    buf = bytes([255, 0, 0, 0, 255, 0])
    assert to_grayscale(buf, 2, 1).tolist() == [[76, 150]]
    with pytest.raises(MalformedInputError):
        to_grayscale(buf, 3, 1)


def test_grayscale_empty_raster():
    with pytest.raises(MalformedInputError):
        to_grayscale(np.zeros((0, 4, 3), np.uint8))


def test_grayscale_rounds_half_up():
    # 0.299*R + 0.587*G + 0.114*B with an exact .5 fraction
    px = np.array([[[0, 0, 5]]], dtype=np.uint8)  # 0.57 -> 1
    assert to_grayscale(px)[0, 0] == 1
    px = np.array([[[0, 0, 25]]], dtype=np.uint8)  # 2.85 -> 3
    assert to_grayscale(px)[0, 0] == 3


# --- integral images ----------------------------------------------------------

def test_integral_examples():
    assert integral(np.array([[5]]))[1, 1] == 5
    ii = integral(np.array([[1, 2], [3, 4]]))
    assert ii.shape == (3, 3) and ii.dtype == np.uint32
    assert ii[2, 2] == 10
    assert not integral(np.zeros((3, 4))).any()


def test_rect_sum_examples():
    ii = integral(np.array([[1, 2], [3, 4]]))
    assert rect_sum(ii, Rect(0, 0, 2, 2)) == 10
    assert rect_sum(ii, Rect(0, 0, 1, 1)) == 1
    assert rect_sum(ii, Rect(1, 1, 0, 0)) == 0
    with pytest.raises(BoundsError):
        rect_sum(ii, Rect(1, 0, 2, 1))


@given(images, st.data())
@settings(max_examples=60, deadline=None)
def test_rect_sum_matches_double_loop(img, data):
    h, w = img.shape
    x = data.draw(st.integers(0, w))
    y = data.draw(st.integers(0, h))
    r = Rect(x, y, data.draw(st.integers(0, w - x)), data.draw(st.integers(0, h - y)))
    assert rect_sum(integral(img), r) == brute_sum(img, r)


@given(images)
@settings(max_examples=40, deadline=None)
def test_integral_monotone(img):
    ii = integral(img).astype(np.int64)
    assert (np.diff(ii, axis=0) >= 0).all() and (np.diff(ii, axis=1) >= 0).all()
    assert not ii[0].any() and not ii[:, 0].any()


def test_integral_largest_supported_image_does_not_overflow():
    # 4096x4096 of 255 is exactly the documented ceiling
    ii = integral(np.full((4096, 4096), 255, np.uint8))
    assert int(ii[-1, -1]) == 255 * 4096 * 4096


# --- crop / resize ---------------------------------------------------------------

def test_crop_examples():
    img = np.array([[1, 2], [3, 4]], np.uint8)
    assert np.array_equal(crop(img, Rect(0, 0, 2, 2)), img)
    assert crop(img, Rect(1, 0, 1, 1)).tolist() == [[2]]
    with pytest.raises(BoundsError):
        crop(img, Rect(1, 0, 2, 1))
    with pytest.raises(BoundsError):
        crop(img, Rect(0, 0, 0, 1))


@given(images)
@settings(max_examples=30, deadline=None)
def test_resize_identity(img):
    h, w = img.shape
    assert np.array_equal(resize_bilinear(img, w, h), img)


@given(st.integers(0, 255), st.integers(1, 30), st.integers(1, 30), st.integers(1, 30), st.integers(1, 30))
@settings(max_examples=40, deadline=None)
def test_resize_constant(v, w, h, ow, oh):
    out = resize_bilinear(np.full((h, w), v, np.uint8), ow, oh)
    assert out.shape == (oh, ow) and (out == v).all()


def test_resize_matches_naive_oracle(rng):
    for _ in range(20):
        img = rng.integers(0, 256, (8, 8), dtype=np.uint8)
        ow, oh = (int(v) for v in rng.integers(1, 20, 2))
        assert np.array_equal(resize_bilinear(img, ow, oh), brute_bilinear(img, ow, oh))


def test_resize_zero_target():
    with pytest.raises(MalformedInputError):
        resize_bilinear(np.zeros((4, 4), np.uint8), 0, 3)


# --- Otsu -----------------------------------------------------------------------

def test_otsu_two_level_example():
    img = np.array([[10, 10, 200, 200]], np.uint8)
    b, t = binarize_otsu(img)
    assert t == 10
    assert b.tolist() == [[0, 0, 1, 1]]


def test_otsu_constant_image():
    with pytest.raises(DegenerateHistogramError):
        binarize_otsu(np.full((5, 5), 77, np.uint8))


@given(images.filter(lambda a: np.unique(a).size > 1))
@settings(max_examples=60, deadline=None)
def test_otsu_matches_exhaustive_scan(img):
    assert otsu_threshold(img) == brute_otsu(img)
    b, _ = binarize_otsu(img)
    assert set(np.unique(b)) <= {0, 1}


@given(images.filter(lambda a: np.unique(a).size > 1), st.randoms(use_true_random=False))
@settings(max_examples=30, deadline=None)
def test_otsu_permutation_invariant(img, r):
    flat = img.ravel().tolist()
    r.shuffle(flat)
    shuffled = np.array(flat, np.uint8).reshape(img.shape[::-1])
    assert otsu_threshold(shuffled) == otsu_threshold(img)


# --- iou ------------------------------------------------------------------------

def test_iou_basics():
    a = Rect(0, 0, 10, 10)
    assert iou(a, a) == 1.0
    assert iou(a, Rect(10, 0, 5, 5)) == 0.0
    assert iou(a, Rect(5, 0, 10, 10)) == pytest.approx(50 / 150)
    assert iou(Rect(0, 0, 0, 0), Rect(0, 0, 0, 0)) == 0.0


# --- PGM ------------------------------------------------------------------------

@given(images)
@settings(max_examples=30, deadline=None)
def test_pgm_round_trip(img):
    assert np.array_equal(decode_pgm(encode_pgm(img)), img)


def test_pgm_file_round_trip(tmp_path, rng):
    img = rng.integers(0, 256, (7, 9), dtype=np.uint8)
    p = tmp_path / "a.pgm"
    write_pgm(p, img)
    assert np.array_equal(read_pgm(p), img)
    assert p.read_bytes() == encode_pgm(img)


def test_pgm_comments_and_errors():
    img = decode_pgm(b"P5\n# made by hand\n2 1\n255\n\x01\x02")
    assert img.tolist() == [[1, 2]]
    for bad in (b"P2\n2 1\n255\n12", b"P5\n2 1\n65535\n\x00\x00\x00\x00", b"P5\n2 1\n255\n\x01",
                b"P5\n2", b"P5\nx 1\n255\n\x01"):
        with pytest.raises(MalformedInputError):
            decode_pgm(bad)
    with pytest.raises(MalformedInputError):
        encode_pgm(np.zeros((2, 2, 3), np.uint8))
    assert io.BytesIO(encode_pgm(np.zeros((1, 1), np.uint8))).read(2) == b"P5"
