import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import conv1d_loop, decompose_2d_loop, haar_matrices
from retina_grade.wavelet import (
    DetailMap,
    combined_detail,
    decompose_1d,
    decompose_2d,
    layer_combined_detail,
    make_kernel,
    multilayer_haar,
    write_detail_csv,
)


@pytest.mark.parametrize("n", range(1, 9))
def test_kernel_law(n):
    k = make_kernel(n)
    assert k.width == 2 * n
    assert abs(np.sum(k.highpass**2) - 1.0) < 1e-12
    assert abs(np.sum(k.lowpass**2) - 1.0) < 1e-12
    assert abs(np.sum(k.highpass)) < 1e-12
    assert np.all(k.highpass[:n] > 0) and np.all(k.highpass[n:] < 0)


def test_kernel_taps_are_read_only():
    k = make_kernel(2)
    with pytest.raises(ValueError):
        k.highpass[0] = 3.0


@pytest.mark.parametrize("bad", [0, -1, 1.5])
def test_make_kernel_rejects(bad):
    with pytest.raises(ValueError):
        make_kernel(bad)


def test_n1_matches_matrix_form(rng):
    k = make_kernel(1)
    A, H = haar_matrices(16)
    for _ in range(20):
        img = rng.uniform(0, 255, (16, 16))
        ac, dh, dv, dd = decompose_2d(img, k)
        np.testing.assert_allclose(dd.values, H @ img @ H.T, atol=1e-10)
        np.testing.assert_allclose(ac.values, A @ img @ A.T, atol=1e-10)
        # rows carry y, columns carry x
        np.testing.assert_allclose(dh.values, H @ img @ A.T, atol=1e-10)
        np.testing.assert_allclose(dv.values, A @ img @ H.T, atol=1e-10)


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_decompose_1d_loop_oracle(rng, n):
    for length in (2, 8, 14, 32):
        x = rng.normal(size=length)
        a, d = decompose_1d(x, make_kernel(n))
        ea, ed = conv1d_loop(list(x), n)
        np.testing.assert_allclose(a, ea, atol=1e-12)
        np.testing.assert_allclose(d, ed, atol=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_decompose_2d_loop_oracle(rng, n):
    img = rng.uniform(0, 255, (12, 10))
    got = decompose_2d(img, make_kernel(n))
    want = decompose_2d_loop(img, n)
    for g, w in zip(got, want):
        np.testing.assert_allclose(g.values, w, atol=1e-10)
    assert [g.direction for g in got] == ["approximate", "horizontal", "vertical", "diagonal"]


def test_detail_of_constant_image_vanishes():
    for n in (1, 2, 4):
        _, dh, dv, dd = decompose_2d(np.full((16, 16), 77.0), make_kernel(n))
        for m in (dh, dv, dd):
            assert np.max(np.abs(m.values)) < 1e-12


def test_haar_energy_is_preserved(rng):
    img = rng.normal(size=(16, 16))
    bands = decompose_2d(img, make_kernel(1))
    assert abs(sum(np.sum(b.values**2) for b in bands) - np.sum(img**2)) < 1e-9


def test_vertical_edge_shows_in_vertical_band():
    img = np.zeros((16, 16))
    img[:, 9:] = 100.0
    _, dh, dv, dd = decompose_2d(img, make_kernel(1))
    assert np.max(np.abs(dh.values)) < 1e-12
    assert np.max(np.abs(dv.values)) > 50


def test_wider_kernel_sees_smooth_ramp_better():
    # a soft edge gives larger peak detail under a wider kernel
    x = np.arange(64.0)
    edge = 100.0 / (1.0 + np.exp(-(x - 32.5) / 4.0))
    peaks = [np.max(np.abs(decompose_1d(edge, make_kernel(n))[1])) for n in (1, 2, 3, 4)]
    assert all(b > a for a, b in zip(peaks, peaks[1:]))


@pytest.mark.parametrize("shape", [(3, 4), (4, 5), (1, 2)])
def test_decompose_2d_rejects_odd(shape):
    with pytest.raises(ValueError):
        decompose_2d(np.zeros(shape), make_kernel(1))


def test_decompose_1d_rejects_odd():
    with pytest.raises(ValueError):
        decompose_1d(np.zeros(5), make_kernel(1))


def test_detail_map_direction_checked():
    with pytest.raises(ValueError):
        DetailMap(np.zeros((2, 2)), "sideways")


def test_multilayer_sizes_and_first_layer(rng):
    img = rng.uniform(0, 255, (32, 32))
    layers = multilayer_haar(img, 3)
    assert [l[0].values.shape for l in layers] == [(16, 16), (8, 8), (4, 4)]
    _, dh, dv, dd = decompose_2d(img, make_kernel(1))
    np.testing.assert_allclose(layers[0][2].values, dd.values)
    comb = layer_combined_detail(img, 3)
    h, v, d = layers[2]
    np.testing.assert_allclose(comb.values, np.abs(h.values) + np.abs(v.values) + np.abs(d.values))
    with pytest.raises(ValueError):
        multilayer_haar(np.zeros((20, 20)), 3)


def test_combined_detail_is_sum_of_abs(rng):
    img = rng.uniform(0, 255, (8, 8))
    _, dh, dv, dd = decompose_2d(img, make_kernel(2))
    comb = combined_detail(img, make_kernel(2))
    assert comb.direction == "combined"
    np.testing.assert_allclose(comb.values, np.abs(dh.values) + np.abs(dv.values) + np.abs(dd.values))


def test_detail_csv(tmp_path):
    m = DetailMap(np.array([[1.0, 2.5], [1 / 3, 0.0]]), "combined")
    p = tmp_path / "d.csv"
    write_detail_csv(p, m)
    rows = [list(map(float, line.split(","))) for line in p.read_text().splitlines()]
    np.testing.assert_allclose(rows, m.values, rtol=1e-5)


@settings(max_examples=40, deadline=None)
@given(
    arrays(np.float64, (8, 8), elements=st.floats(-100, 100)),
    arrays(np.float64, (8, 8), elements=st.floats(-100, 100)),
    st.floats(-3, 3),
    st.integers(1, 4),
)
def test_decomposition_is_linear(a, b, alpha, n):
    k = make_kernel(n)
    lhs = decompose_2d(a + alpha * b, k)
    ra, rb = decompose_2d(a, k), decompose_2d(b, k)
    for l, x, y in zip(lhs, ra, rb):
        np.testing.assert_allclose(l.values, x.values + alpha * y.values, atol=1e-8)


def test_highpass_taps_for_small_n():
    np.testing.assert_allclose(make_kernel(1).highpass, [1 / np.sqrt(2), -1 / np.sqrt(2)], atol=1e-15)
    np.testing.assert_allclose(make_kernel(2).highpass, [0.5, 0.5, -0.5, -0.5], atol=1e-15)
    np.testing.assert_allclose(make_kernel(3).highpass, np.array([1, 1, 1, -1, -1, -1]) / np.sqrt(6), atol=1e-15)


def test_two_sample_haar_by_hand():
    approx, detail = decompose_1d(np.array([6.0, 2.0]), make_kernel(1))
    assert approx == pytest.approx([8 / np.sqrt(2)])
    assert detail == pytest.approx([4 / np.sqrt(2)])
    assert decompose_1d(np.array([3.0, 3.0]), make_kernel(1))[1] == pytest.approx([0.0])


def test_output_sizes(rng):
    img = rng.uniform(0, 255, (64, 64))
    assert all(c.values.shape == (32, 32) for c in decompose_2d(img, make_kernel(1)))
    assert layer_combined_detail(img, 3).values.shape == (8, 8)
