import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evoclim.spectral.periodogram import n_half
from evoclim.spectral.smoothing import (BandwidthParams, bandwidth_profile, candidate_grid,
                                        cross_validate_bandwidth, cv_score, effective_weights,
                                        fill_matrix, h_profile, smooth_delta, smoothing_matrix)
from evoclim.spectral.whittle import interior_mask

bandwidths = st.builds(lambda a, b, p: BandwidthParams(min(a, b), max(a, b), p),
                       st.floats(0.5, 60), st.floats(0.5, 60), st.floats(0.05, 0.95))


def direct_fixed_smooth(rough_half, m, block):
    """Smooth the even full-circle extension with an explicit kernel sum."""
    j = np.arange(block)
    full = rough_half[np.minimum(j, block - j)]
    k = np.arange(-int(m), int(m) + 1)
    w = 1 - (k / (m + 1)) ** 2
    w /= w.sum()
    out = np.empty(n_half(block))
    for i in range(out.size):
        out[i] = sum(wk * full[(i + kk) % block] for kk, wk in zip(k, w))
    return out


@pytest.mark.parametrize("block", [64, 65, 730])
@pytest.mark.parametrize("m", [1, 7, 25.0, 40])
def test_fixed_bandwidth_matches_direct_convolution(block, m):
    rough = np.random.default_rng(block).normal(size=n_half(block))
    got = smooth_delta(rough, BandwidthParams.fixed(m), block)
    assert np.allclose(got, direct_fixed_smooth(rough, m, block), rtol=0, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(bandwidths, st.integers(8, 300), st.floats(-5, 5))
def test_constant_is_preserved(params, block, c):
    out = smooth_delta(np.full(n_half(block), c), params, block)
    assert np.allclose(out, c, rtol=0, atol=1e-12 * max(1, abs(c)))


@settings(max_examples=40, deadline=None)
@given(bandwidths, st.integers(8, 300))
def test_weights_nonnegative_and_normalized(params, block):
    W = smoothing_matrix(params, block)
    assert np.all(W >= 0)
    assert np.allclose(W.sum(axis=1), 1.0, rtol=0, atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(bandwidths, st.integers(8, 200), st.integers(0, 2 ** 32 - 1))
def test_smoothing_reduces_variance_factor(params, block, seed):
    W = effective_weights(params, block, interior_mask(block))
    assert np.all(np.sum(W * W, axis=1) <= 1 + 1e-12)


def test_h_profile_shape():
    u = np.linspace(0, 1, 101)
    h = h_profile(u, 0.4)
    assert h[0] == 0 and np.all(h[u >= 0.4] == 1)
    assert np.all(np.diff(h) >= 0)
    assert h_profile(0.2, 0.4) == pytest.approx(0.5)


def test_bandwidth_flat_region_is_m1():
    b = BandwidthParams(50, 350, 0.4)
    mj = bandwidth_profile(b, 3650)
    u = 2 * np.arange(mj.size) / 3650
    assert np.all(mj[u >= 0.4] == 350) and mj[0] == 50
    assert np.all((mj >= 50) & (mj <= 350))


@pytest.mark.parametrize("args", [(0, 10, 0.5), (20, 10, 0.5), (10, 20, 0.0), (10, 20, 1.0)])
def test_invalid_bandwidth_params(args):
    with pytest.raises(ValueError):
        BandwidthParams(*args)


def test_fill_matrix_and_effective_weights():
    block = 40
    fitted = interior_mask(block)
    F = fill_matrix(fitted)
    assert F[0, 1] == 1 and F[-1, -2] == 1 and np.all(F.sum(axis=1) == 1)
    b = BandwidthParams(3, 8, 0.5)
    assert np.allclose(effective_weights(b, block, fitted), smoothing_matrix(b, block) @ F)


def test_even_symmetry_of_full_circle_extension():
    block = 100
    rough = np.random.default_rng(0).normal(size=n_half(block))
    out = smooth_delta(rough, BandwidthParams(2, 20, 0.3), block)
    j = np.arange(block)
    full = out[np.minimum(j, block - j)]
    assert np.array_equal(full[1:], full[1:][::-1])


def test_candidate_grid_order_and_size():
    grid = candidate_grid()
    assert len(grid) == 21 * 5
    assert grid[0] == BandwidthParams(800, 800, 0.1)
    assert all(b.m0 <= b.m1 for b in grid)


BLOCK = 1460


def _u():
    return 2 * np.arange(n_half(BLOCK)) / BLOCK


def test_cv_constant_truth_selects_largest_m1():
    rng = np.random.default_rng(21)
    rough = -0.1 + 0.05 * rng.standard_normal((3, n_half(BLOCK)))
    choice, scores = cross_validate_bandwidth(rough, interior_mask(BLOCK), BLOCK)
    assert choice.m1 == 800
    assert len(scores) == 105


def test_cv_sharp_low_frequency_feature_selects_variable_bandwidth():
    rng = np.random.default_rng(22)
    rough = 0.3 * np.exp(-(_u() / 0.03) ** 2) + 0.05 * rng.standard_normal((3, n_half(BLOCK)))
    choice, _ = cross_validate_bandwidth(rough, interior_mask(BLOCK), BLOCK)
    assert choice.m0 < choice.m1


def test_cv_degenerate_input_returns_smoothest():
    rough = np.full((2, n_half(200)), 0.7)
    choice, _ = cross_validate_bandwidth(rough, interior_mask(200), 200,
                                         candidate_grid((5, 10, 20), (0.3, 0.5)))
    assert choice == BandwidthParams(20, 20, 0.3)


def test_cv_score_invariant_to_location_order():
    rng = np.random.default_rng(3)
    rough = rng.normal(size=(5, n_half(300)))
    b = BandwidthParams(5, 30, 0.5)
    fitted = interior_mask(300)
    assert cv_score(rough, fitted, b, 300) == cv_score(rough[::-1], fitted, b, 300)
