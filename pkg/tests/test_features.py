import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import drop_small_loop, ring_counts_loop
from retina_grade.features import (
    BinaryMap,
    annular_features,
    binarize,
    extract_features,
    feature_stack,
    remove_small_components,
    ring_areas,
    ring_index_map,
    write_feature_csv,
)
from retina_grade.wavelet import DetailMap, combined_detail, make_kernel


def _combined(values):
    return DetailMap(np.asarray(values, dtype=float), "combined")


def test_binarize_is_strict():
    b = binarize(_combined([[1.0, 2.0], [2.0000001, 3.0]]), 2.0)
    assert b.bits.tolist() == [[False, False], [True, True]]


def test_binarize_wants_combined_map():
    with pytest.raises(ValueError):
        binarize(DetailMap(np.zeros((2, 2)), "diagonal"), 1.0)
    with pytest.raises(ValueError):
        binarize(_combined(np.zeros((2, 2))), -1.0)


def test_small_components_removed_with_8_connectivity():
    bits = np.zeros((20, 20), bool)
    bits[2, 2:11] = True  # 9 px: dropped
    bits[10:15, 10] = True
    bits[15, 11:16] = True  # 10 px: kept
    # diagonal chain of 10: one component only under 8-connectivity
    for i in range(10):
        bits[i, 19 - i] = True
    out = remove_small_components(BinaryMap(bits), 10, eight=True).bits
    assert not out[2, 2:11].any()
    assert out[10:15, 10].all() and out[15, 11:16].all()
    assert out[0, 19] and out[9, 10]
    out4 = remove_small_components(BinaryMap(bits), 10, eight=False).bits
    assert not out4[0, 19]


@settings(max_examples=30, deadline=None)
@given(arrays(np.bool_, (14, 17)), st.integers(1, 12), st.booleans())
def test_removal_matches_flood_fill(bits, min_size, eight):
    got = remove_small_components(BinaryMap(bits), min_size, eight).bits
    np.testing.assert_array_equal(got, drop_small_loop(bits, min_size, eight))


@settings(max_examples=30, deadline=None)
@given(arrays(np.bool_, (16, 16)), st.integers(1, 12))
def test_removal_is_idempotent(bits, min_size):
    once = remove_small_components(BinaryMap(bits), min_size)
    twice = remove_small_components(once, min_size)
    np.testing.assert_array_equal(once.bits, twice.bits)


@pytest.mark.parametrize("side,rings", [(128, 20), (32, 20), (10, 3), (9, 4)])
def test_rings_partition_the_grid(side, rings):
    idx = ring_index_map(side, side, rings)
    assert idx.min() == 0 and idx.max() == rings - 1
    areas = ring_areas(side, side, rings)
    assert areas.sum() == side * side
    full = annular_features(BinaryMap(np.ones((side, side), bool)), rings)
    np.testing.assert_array_equal(full, areas)


def test_ring_index_against_loop(rng):
    bits = rng.random((30, 30)) < 0.4
    np.testing.assert_array_equal(annular_features(BinaryMap(bits), 20), ring_counts_loop(bits, 20))


def test_ring_pixel_positions():
    idx = ring_index_map(128, 128, 20)
    # centre pixels live in ring 0, corners fold into the outer ring
    assert idx[63, 63] == idx[64, 64] == 0
    assert idx[0, 0] == idx[127, 127] == 19
    # ring width is R/20 = 3.2 on a 128 grid
    d = np.hypot(96 - 63.5, 64 - 63.5)
    assert idx[64, 96] == int(d // 3.2)


def test_rotation_by_90_keeps_features(rng):
    bits = rng.random((64, 64)) < 0.3
    a = annular_features(BinaryMap(bits))
    b = annular_features(BinaryMap(np.rot90(bits).copy()))
    np.testing.assert_array_equal(a, b)


def test_annular_rejects_non_square():
    with pytest.raises(ValueError):
        annular_features(BinaryMap(np.zeros((10, 14), bool)))
    with pytest.raises(ValueError):
        annular_features(BinaryMap(np.zeros((10, 10), bool)), 0)


def test_feature_stack_matches_stepwise(rng):
    img = rng.uniform(0, 255, (64, 64))
    from scipy.ndimage import gaussian_filter

    img = gaussian_filter(img, 1.5)
    k = make_kernel(3)
    detail = combined_detail(img, k)
    thresholds = [0, 1, 2, 4, 8, 16]
    stack = feature_stack(detail, thresholds)
    for row, t in zip(stack, thresholds):
        np.testing.assert_array_equal(row, extract_features(img, k, t))


def test_counts_fall_as_threshold_rises(rng):
    detail = _combined(rng.exponential(5.0, (64, 64)))
    stack = feature_stack(detail, np.arange(0, 30), min_size=0)
    totals = stack.sum(axis=1)
    assert np.all(np.diff(totals) <= 0)


def test_feature_stack_checks():
    with pytest.raises(ValueError):
        feature_stack(DetailMap(np.zeros((4, 4)), "horizontal"), [1])
    with pytest.raises(ValueError):
        feature_stack(_combined(np.zeros((4, 4))), [-1])


def test_feature_csv(tmp_path):
    p = tmp_path / "f.csv"
    write_feature_csv(p, np.array([3, 0, 7]))
    assert p.read_text() == "mask_index,count\n1,3\n2,0\n3,7\n"


def test_binarize_small_map():
    assert binarize(_combined([[1, 5], [3, 9]]), 3).bits.tolist() == [[False, True], [False, True]]
    assert not binarize(_combined(np.zeros((4, 4))), 3).bits.any()
    assert binarize(_combined([[0.1, 2.0], [7.0, 1e-9]]), 0).bits.all()


def test_all_true_100_against_annuli():
    counts = annular_features(BinaryMap(np.ones((100, 100), bool)))
    assert counts.tolist() == ring_counts_loop(np.ones((100, 100), bool), 20)
    # rings are 2.5 px wide here, so single rings carry pixel-quantization error;
    # the discs they accumulate to follow pi r^2 closely
    r = np.arange(1, 21) * 2.5
    cum = np.cumsum(counts)[3:19]
    np.testing.assert_allclose(cum, np.pi * r[3:19] ** 2, rtol=0.02)


def test_all_true_200_ring_areas():
    counts = annular_features(BinaryMap(np.ones((200, 200), bool)))
    k = np.arange(19)
    np.testing.assert_allclose(counts[:19], np.pi * 25 * ((k + 1) ** 2 - k**2), rtol=0.02)


def test_constant_image_has_no_features():
    assert not extract_features(np.full((64, 64), 90.0), make_kernel(2), 0.5).any()


def test_sharp_beats_blurred():
    from scipy.ndimage import gaussian_filter

    from retina_grade.cascade import PipelineConfig, prepare_image
    from retina_grade.synthgen import SynthSpec, generate

    sharp = prepare_image(generate(SynthSpec(grade=1, side=128, seed=3))[0], PipelineConfig(side=128))
    blurred = gaussian_filter(sharp, 2.0)
    k = make_kernel(3)
    assert extract_features(sharp, k, 8).sum() > extract_features(blurred, k, 8).sum()
