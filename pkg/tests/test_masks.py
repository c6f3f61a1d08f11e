import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from freeseg.masks import (BoundingBox, EmptyMaskError, RleError, RleMask, area, as_mask,
                           bbox_of, intersection_area, rle_decode, rle_encode)

import oracles

masks = st.tuples(st.integers(1, 12), st.integers(1, 12)).flatmap(
    lambda hw: arrays(bool, hw))


def boxes_for(h, w):
    return st.builds(BoundingBox, st.integers(-3, w + 2), st.integers(-3, h + 2),
                     st.integers(0, w + 4), st.integers(0, h + 4))


# ---- area

def test_area_empty_and_full():
    assert area(np.zeros((4, 4), bool)) == 0
    assert area(np.ones((4, 4), bool)) == 16


def test_area_l_shape():
    m = np.zeros((5, 5), bool)
    m[0:4, 1] = True
    m[3, 2:5] = True
    assert area(m) == oracles.count_pixels(m) == 7


def test_as_mask_from_flat_row_major():
    m = as_mask([0, 1, 0, 0, 0, 1], width=3, height=2)
    assert m.tolist() == [[False, True, False], [False, False, True]]
    with pytest.raises(ValueError):
        as_mask([0, 1, 0], width=2, height=2)


# ---- intersection

def test_intersection_exact_and_disjoint():
    m = np.zeros((20, 20), bool)
    m[:2, :2] = True
    assert intersection_area(m, BoundingBox(0, 0, 2, 2)) == 4
    assert intersection_area(m, BoundingBox(10, 10, 2, 2)) == 0


def test_intersection_constructed_fixture():
    m = np.zeros((6, 6), bool)
    m[0:2, 0:4] = True
    box = BoundingBox(1, 0, 3, 4)
    assert (area(m), box.area) == (8, 12)
    assert intersection_area(m, box) == 6


def test_intersection_clamps_loose_box():
    m = np.ones((4, 4), bool)
    assert intersection_area(m, BoundingBox(-5, -5, 100, 100)) == 16


@given(masks.flatmap(lambda m: st.tuples(st.just(m), boxes_for(*m.shape))))
def test_intersection_matches_scan_and_bounds(pair):
    m, box = pair
    b = box.clamp(m.shape[1], m.shape[0])
    inter = intersection_area(m, box)
    assert inter == oracles.box_mask_overlap(m, b.x, b.y, b.w, b.h)[0]
    assert inter <= min(area(m), b.area)
    # box as a filled mask gives the same count
    assert inter == area(m & box.to_mask(m.shape[1], m.shape[0]))


# ---- boxes

def test_box_clamp_and_from_xywh():
    assert BoundingBox(-2, 3, 10, 10).clamp(5, 8) == BoundingBox(0, 3, 5, 5)
    assert BoundingBox.from_xywh([1.5, 2.2, 3.0, 1.0]) == BoundingBox(1, 2, 4, 2)
    assert BoundingBox.from_xywh([-1, -1, 50, 50], width=10, height=20) == BoundingBox(0, 0, 10, 20)
    with pytest.raises(ValueError):
        BoundingBox(0, 0, -1, 2)


def test_bbox_of_examples():
    m = np.zeros((8, 8), bool)
    m[5, 3] = True
    assert bbox_of(m) == BoundingBox(3, 5, 1, 1)
    assert bbox_of(np.ones((7, 9), bool)) == BoundingBox(0, 0, 9, 7)
    m = np.zeros((6, 6), bool)
    m[1, 1] = m[2, 4] = True
    assert bbox_of(m) == BoundingBox(1, 1, 4, 2)


def test_bbox_of_empty_raises():
    with pytest.raises(EmptyMaskError):
        bbox_of(np.zeros((3, 3), bool))


@given(masks)
def test_bbox_is_tight(m):
    if not m.any():
        return
    b = bbox_of(m)
    inside = b.to_mask(m.shape[1], m.shape[0])
    assert not (m & ~inside).any()
    # each side touches a foreground pixel
    assert m[b.y, b.x:b.x + b.w].any() and m[b.y + b.h - 1, b.x:b.x + b.w].any()
    assert m[b.y:b.y + b.h, b.x].any() and m[b.y:b.y + b.h, b.x + b.w - 1].any()


# ---- RLE

def test_rle_examples():
    assert rle_encode(np.zeros((3, 3), bool)).counts == (9,)
    assert rle_encode(np.ones((3, 3), bool)).counts == (0, 9)
    m = np.zeros((2, 2), bool)
    m[0, 1] = True
    assert rle_encode(m).counts == (2, 1, 1)
    assert list(rle_encode(m).counts) == oracles.scanline_rle(m.tolist())


def test_rle_coco_dict_layout():
    m = np.zeros((2, 3), bool)
    m[1, 2] = True
    obj = rle_encode(m).to_coco()
    assert obj == {"size": [2, 3], "counts": [5, 1]}
    assert np.array_equal(rle_decode(RleMask.from_coco(obj)), m)


def test_rle_decode_rejects_bad_total():
    with pytest.raises(RleError):
        rle_decode(RleMask(3, 3, (4, 4)))


def test_rle_compressed_strings_rejected():
    with pytest.raises(RleError):
        RleMask.from_coco({"size": [2, 2], "counts": "04"})


@pytest.mark.parametrize("h,w", [(1, 1), (1, 2), (2, 1), (2, 2), (1, 3), (3, 1), (2, 3), (3, 2)])
def test_rle_round_trip_exhaustive_small(h, w):
    for bits in itertools.product([False, True], repeat=h * w):
        m = np.array(bits, bool).reshape(h, w)
        rle = rle_encode(m)
        assert list(rle.counts) == oracles.scanline_rle(m.tolist())
        assert np.array_equal(rle_decode(rle), m)


@settings(max_examples=200)
@given(masks)
def test_rle_round_trip_random(m):
    rle = rle_encode(m)
    assert sum(rle.counts) == m.size
    assert np.array_equal(rle_decode(rle), m)
