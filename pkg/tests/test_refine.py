import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from freeseg.refine import (NoThresholdError, RefineConfig, binarize, closing, dilate, erode,
                            gaussian_filter, gaussian_kernel, largest_connected_component,
                            li_threshold, opening, refine_segment)

import oracles

small_masks = st.tuples(st.integers(1, 10), st.integers(1, 10)).flatmap(lambda hw: arrays(bool, hw))


# ---- gaussian

def test_gaussian_constant_is_fixed_point():
    g = np.full((9, 11), 128.0)
    assert np.allclose(gaussian_filter(g, 2.0), 128.0)


def test_gaussian_impulse_center_weight():
    g = np.zeros((7, 7))
    g[3, 3] = 255
    out = gaussian_filter(g, sigma=1.0, radius=2)
    # direct 2-D convolution oracle value
    assert out[3, 3] == pytest.approx(41.336219517467285, abs=1e-9)
    assert out[3, 3] == pytest.approx(255 * gaussian_kernel(1.0, 2)[2] ** 2)


def test_gaussian_step_edge_rows_identical_and_monotone():
    g = np.zeros((8, 12))
    g[:, 6:] = 255
    out = gaussian_filter(g, 2.0)
    assert (out == out[0]).all()
    assert (np.diff(out[0]) >= 0).all()


def test_gaussian_default_radius_and_normalization():
    cfg = RefineConfig()
    assert cfg.gaussian_radius == 4
    k = gaussian_kernel(cfg.gaussian_sigma, cfg.gaussian_radius)
    assert k.size == 9
    assert abs(k.sum() - 1) < cfg.li_tolerance


def test_gaussian_matches_direct_convolution():
    rng = np.random.default_rng(3)
    for _ in range(5):
        g = rng.uniform(0, 255, (rng.integers(3, 9), rng.integers(3, 9)))
        k = gaussian_kernel(1.3, 2)
        assert np.allclose(gaussian_filter(g, 1.3, 2), oracles.convolve_edge(g, k), atol=1e-9)


def test_gaussian_preserves_interior_mean_of_constant():
    g = np.full((20, 20), 77.0)
    assert gaussian_filter(g, 2.0)[4:-4, 4:-4].mean() == pytest.approx(77.0, abs=1e-9)


# ---- Li threshold

def test_li_bimodal_fixture():
    g = np.array([50.0] * 50 + [200.0] * 50).reshape(10, 10)
    t = li_threshold(g)
    assert t == pytest.approx(108.2, abs=0.5)
    assert t == pytest.approx((50 - 200) / (np.log(50) - np.log(200)))
    assert t == pytest.approx(oracles.li_iterate(g))
    minimizers = oracles.cross_entropy_minimizers(g.astype(int))
    assert min(minimizers) <= t <= max(minimizers) + 1


def test_li_zero_background_uses_guard():
    g = np.array([0.0] * 8 + [255.0] * 8)
    t = li_threshold(g)
    assert 0 < t < 255


def test_li_two_adjacent_levels():
    g = np.array([100.0, 101.0] * 10)
    t = li_threshold(g)
    assert 100 <= t < 101
    assert binarize(g, t).sum() == 10
    assert t == pytest.approx(oracles.li_iterate(g))


def test_li_constant_map_raises():
    with pytest.raises(NoThresholdError):
        li_threshold(np.full((4, 4), 9.0))


@settings(max_examples=50)
@given(st.lists(st.integers(0, 255), min_size=2, max_size=60).filter(lambda v: len(set(v)) > 1),
       st.randoms(use_true_random=False))
def test_li_depends_only_on_histogram(values, rnd):
    shuffled = list(values)
    rnd.shuffle(shuffled)
    assert li_threshold(np.array(values, float)) == li_threshold(np.array(shuffled, float))


@settings(max_examples=50)
@given(st.lists(st.integers(0, 255), min_size=2, max_size=60).filter(lambda v: len(set(v)) > 1))
def test_li_matches_reference_iteration(values):
    v = np.array(values, float)
    assert li_threshold(v) == pytest.approx(oracles.li_iterate(v), rel=1e-9, abs=1e-9)
    assert min(values) < li_threshold(v) < max(values)


# ---- binarize

def test_binarize_examples():
    assert not binarize(np.zeros((3, 3)), 10).any()
    g = np.array([[50, 200], [200, 50]], float)
    assert binarize(g, 108.2).tolist() == [[False, True], [True, False]]
    assert not binarize(np.full((2, 2), 7.0), 7.0).any()


@given(arrays(float, (5, 5), elements=st.floats(0, 255)), st.floats(0, 255), st.floats(0, 255))
def test_binarize_monotone(g, a, b):
    lo, hi = sorted((a, b))
    assert not (binarize(g, hi) & ~binarize(g, lo)).any()


# ---- morphology

def test_dilate_single_pixel():
    m = np.zeros((5, 5), bool)
    m[2, 2] = True
    assert np.array_equal(dilate(m, 1), np.pad(np.ones((3, 3), bool), 1))
    m = np.zeros((5, 5), bool)
    m[0, 0] = True
    expected = np.zeros((5, 5), bool)
    expected[:2, :2] = True
    assert np.array_equal(dilate(m, 1), expected)


def test_erode_block_to_center():
    m = np.zeros((7, 7), bool)
    m[2:5, 2:5] = True
    expected = np.zeros((7, 7), bool)
    expected[3, 3] = True
    assert np.array_equal(erode(m, 1), expected)


def test_erode_eats_border_foreground():
    assert not erode(np.ones((2, 2), bool), 1).any()
    assert erode(np.ones((3, 3), bool), 1).sum() == 1


@given(small_masks, st.integers(1, 2))
def test_morphology_matches_oracle(m, k):
    assert np.array_equal(dilate(m, k), oracles.morph(m, k, "dilate"))
    assert np.array_equal(erode(m, k), oracles.morph(m, k, "erode"))


@given(small_masks, st.integers(1, 2))
def test_opening_and_closing_bounds(m, k):
    assert not (opening(m, k) & ~m).any()
    # closing is extensive away from the border (border pixels always erode)
    inner = np.zeros_like(m)
    inner[k:m.shape[0] - k, k:m.shape[1] - k] = True
    assert not (m & inner & ~closing(m, k)).any()


@given(small_masks, st.integers(1, 2))
def test_erode_dilate_duality_interior(m, k):
    inner = np.zeros_like(m)
    inner[k:m.shape[0] - k, k:m.shape[1] - k] = True
    assert np.array_equal(erode(m, k)[inner], ~dilate(~m, k)[inner])


# ---- largest component

def test_lcc_keeps_bigger_component():
    m = np.zeros((6, 10), bool)
    m[0, 0:5] = True
    m[4, 6:9] = True
    out = largest_connected_component(m)
    assert out.sum() == 5 and out[0, 0:5].all()


def test_lcc_empty():
    out = largest_connected_component(np.zeros((4, 4), bool))
    assert not out.any() and out.shape == (4, 4)


def test_lcc_diagonal_connectivity():
    m = np.zeros((4, 4), bool)
    m[0, 0] = m[1, 1] = m[2, 2] = True
    m[3, 0] = True
    assert largest_connected_component(m, "eight").sum() == 3
    # a 2-pixel run with a diagonal neighbour: one component under 8, two under 4
    m = np.zeros((3, 3), bool)
    m[0, 0] = m[0, 1] = True
    m[1, 2] = True
    assert len(oracles.components(m, "four")) == 2
    assert len(oracles.components(m, "eight")) == 1
    assert largest_connected_component(m, "eight").sum() == 3
    out4 = largest_connected_component(m, "four")
    assert out4.sum() == 2 and out4[0, 0] and out4[0, 1]


def test_lcc_tie_goes_to_first_row_major():
    m = np.zeros((5, 5), bool)
    m[4, 0:2] = True
    m[0, 3:5] = True
    out = largest_connected_component(m, "four")
    assert out[0, 3] and out[0, 4] and out.sum() == 2


@settings(max_examples=60)
@given(small_masks, st.sampled_from(["four", "eight"]))
def test_lcc_matches_oracle(m, conn):
    out = largest_connected_component(m, conn)
    assert np.array_equal(out, oracles.largest_component(m, conn))
    assert not (out & ~m).any()
    assert len(oracles.components(out, conn)) <= 1


# ---- full refinement

def test_refine_noisy_disk():
    rng = np.random.default_rng(11)
    gray, disk = oracles.noisy_disk_map(rng)
    out = refine_segment(gray)
    assert oracles.mask_iou(out, disk) >= 0.95
    assert len(oracles.components(out, "eight")) == 1


def test_refine_constant_map_raises():
    with pytest.raises(NoThresholdError):
        refine_segment(np.full((16, 16), 40.0))


def test_refine_drops_speck():
    g = np.full((64, 64), 20.0)
    g[10:50, 10:40] = 230
    g[55:57, 55:57] = 230
    out = refine_segment(g)
    assert not out[52:, 52:].any()
    assert out[30, 25]


def test_refine_close_then_open_and_four_connectivity():
    rng = np.random.default_rng(5)
    gray, disk = oracles.noisy_disk_map(rng)
    cfg = RefineConfig(morph_order="close_then_open", connectivity="four", morph_kernel=2)
    out = refine_segment(gray, cfg)
    assert oracles.mask_iou(out, disk) >= 0.95
    assert len(oracles.components(out, "four")) == 1


def test_refine_config_validation():
    with pytest.raises(ValueError):
        RefineConfig(gaussian_sigma=0)
    with pytest.raises(ValueError):
        RefineConfig(li_max_iters=0)
    with pytest.raises(ValueError):
        RefineConfig(morph_order="dilate_only")
    assert RefineConfig(gaussian_sigma=0.4).gaussian_radius == 2
