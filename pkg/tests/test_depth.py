import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from editeval.core import RasterImage, ScalarField
from editeval.depth import (
    DegenerateFitError,
    EmptyMaskError,
    affine_align,
    decode_luminance,
    degenerate_metrics,
    depth_metrics,
    encode_depth_gray,
    eval_mask,
)


def grid_fit(p, g, a_range=(-6, 6), b_range=(-6, 6), step=0.01):
    """Exhaustive search of the squared loss on a regular (a, b) grid."""
    a_grid = np.arange(a_range[0], a_range[1] + step / 2, step)
    b_grid = np.arange(b_range[0], b_range[1] + step / 2, step)
    best = (math.inf, None, None)
    for a in a_grid:
        loss = ((a * p[None, :] + b_grid[:, None] - g[None, :]) ** 2).sum(axis=1)
        k = int(np.argmin(loss))
        if loss[k] < best[0]:
            best = (loss[k], a, b_grid[k])
    return best


def brute_depth_metrics(pred, gt):
    n = hits = 0
    abs_rel = sq = 0.0
    for p, g in zip(pred, gt):
        n += 1
        if p > 0 and max(p / g, g / p) < 1.25:
            hits += 1
        abs_rel += abs(p - g) / g
        sq += (p - g) ** 2
    return hits / n, abs_rel / n, math.sqrt(sq / n)


def _field(values, valid=None):
    values = np.asarray(values, dtype=float).reshape(1, -1)
    return ScalarField(values, np.ones(values.shape, bool) if valid is None else np.asarray(valid).reshape(1, -1))


@pytest.mark.parametrize("rgb, expected", [((1, 0, 0), 0.2126), ((0, 1, 0), 0.7152), ((0, 0, 1), 0.0722)])
def test_luminance_weights(rgb, expected):
    img = RasterImage(np.array([[rgb]], dtype=float))
    assert abs(decode_luminance(img).values[0, 0] - expected) < 1e-12


def test_luminance_of_gray_is_gray():
    for g in np.linspace(0, 1, 11):
        img = RasterImage(np.full((1, 1, 3), g))
        assert abs(decode_luminance(img).values[0, 0] - g) < 1e-12


def test_encode_depth_endpoints_and_linear():
    assert encode_depth_gray(_field([1.0, 3.0])).pixels[0, :, 0].tolist() == [1.0, 0.0]
    assert encode_depth_gray(_field([1.0, 2.0, 3.0])).pixels[0, :, 0].tolist() == [1.0, 0.5, 0.0]


def test_encode_depth_constant_and_invalid():
    img = encode_depth_gray(_field([2.0, 2.0, 9.0], [True, True, False]))
    assert img.pixels[0, :, 0].tolist() == [1.0, 1.0, 0.0]
    assert np.all(img.pixels[..., 0] == img.pixels[..., 1])
    assert np.all(img.pixels[..., 1] == img.pixels[..., 2])


def test_encode_depth_all_invalid():
    with pytest.raises(EmptyMaskError):
        encode_depth_gray(_field([1.0], [False]))


def test_align_identity():
    g = _field([1.0, 2.0, 5.0])
    fit, aligned = affine_align(g, g)
    assert fit.scale == pytest.approx(1.0, abs=1e-12)
    assert fit.offset == pytest.approx(0.0, abs=1e-12)
    assert fit.residual_rms < 1e-12


def test_align_negative_scale():
    gt = np.array([1.0, 2.5, 4.0, 7.0])
    fit, _ = affine_align(_field(-2 * gt + 5), _field(gt))
    assert fit.scale == pytest.approx(-0.5, abs=1e-12)
    assert fit.offset == pytest.approx(2.5, abs=1e-12)
    assert fit.residual_rms < 1e-12


def test_align_two_points():
    fit, aligned = affine_align(_field([0.0, 1.0]), _field([2.0, 4.0]))
    assert (fit.scale, fit.offset) == pytest.approx((2.0, 2.0), abs=1e-12)
    assert aligned.values[0].tolist() == pytest.approx([2.0, 4.0])


def test_align_constant_prediction_carries_fallback():
    with pytest.raises(DegenerateFitError) as info:
        affine_align(_field([0.5, 0.5, 0.5]), _field([1.0, 2.0, 3.0]))
    fb = info.value.fallback
    assert fb.scale == 0.0 and fb.offset == pytest.approx(2.0) and fb.degenerate


def test_align_needs_two_pixels():
    with pytest.raises(EmptyMaskError):
        affine_align(_field([0.1, 0.2], [True, False]), _field([1.0, 2.0]))


@pytest.mark.parametrize("seed", range(5))
def test_align_matches_grid_search(seed):
    rng = np.random.default_rng(seed)
    p = rng.random(6)
    g = rng.uniform(-3, 3) * p + rng.uniform(-3, 3) + rng.normal(0, 0.1, 6)
    fit, _ = affine_align(_field(p), _field(g))
    loss_grid, a_grid, b_grid = grid_fit(p, g)
    loss_fit = float(((fit.scale * p + fit.offset - g) ** 2).sum())
    assert loss_fit <= loss_grid + 1e-12
    assert abs(fit.scale - a_grid) <= 0.05 and abs(fit.offset - b_grid) <= 0.05


def test_metrics_perfect():
    g = _field([1.0, 2.0, 3.0])
    m = depth_metrics(g, g)
    assert (m.delta1, m.absrel, m.rmse) == (1.0, 0.0, 0.0)


def test_metrics_uniform_overshoot():
    g = np.array([1.0, 2.0, 4.0])
    m = depth_metrics(_field(1.3 * g), _field(g))
    assert m.delta1 == 0.0
    assert m.absrel == pytest.approx(0.3, abs=1e-12)


def test_metrics_two_pixels():
    m = depth_metrics(_field([2.0, 4.0]), _field([2.0, 2.0]))
    assert m.delta1 == 0.5
    assert m.absrel == pytest.approx(0.5)
    assert m.rmse == pytest.approx(math.sqrt(2))


def test_negative_predictions_fail_delta1_unclamped():
    m = depth_metrics(_field([-1.0, 2.0]), _field([1.0, 2.0]))
    assert m.delta1 == 0.5
    assert m.absrel == pytest.approx(1.0)


def test_metrics_match_loop_oracle(rng):
    for _ in range(20):
        gt = rng.uniform(0.5, 10, 64)
        pred = gt * rng.uniform(0.6, 1.5, 64) - rng.uniform(0, 1, 64)
        m = depth_metrics(_field(pred), _field(gt))
        d1, ar, rmse = brute_depth_metrics(pred, gt)
        assert m.delta1 == d1
        assert abs(m.absrel - ar) <= 1e-12 and abs(m.rmse - rmse) <= 1e-12


def test_metrics_no_valid_pixels():
    with pytest.raises(EmptyMaskError):
        depth_metrics(_field([1.0], [False]), _field([1.0]))


def test_degenerate_metrics_pin_delta1():
    gt = _field([1.0, 3.0])
    with pytest.raises(DegenerateFitError) as info:
        affine_align(_field([0.2, 0.2]), gt)
    m = degenerate_metrics(gt, info.value.fallback)
    assert m.delta1 == 0.0
    assert m.absrel == pytest.approx((1 / 1 + 1 / 3) / 2)


def test_round_trip_without_quantization(rng):
    gt = ScalarField.full(rng.uniform(1, 8, (6, 9)))
    pred = decode_luminance(encode_depth_gray(gt))
    fit, aligned = affine_align(pred, gt)
    assert fit.residual_rms < 1e-6
    m = depth_metrics(aligned, gt)
    assert m.delta1 == 1.0 and m.absrel < 1e-9 and m.rmse < 1e-6


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 5) | st.floats(-5, -0.1), st.floats(-5, 5), st.integers(0, 10_000))
def test_alignment_is_affine_invariant(a, b, seed):
    rng = np.random.default_rng(seed)
    gt = _field(rng.uniform(1, 5, 30))
    pred = _field(rng.random(30))
    moved = _field(a * pred.values + b)
    m1 = depth_metrics(affine_align(pred, gt)[1], gt)
    m2 = depth_metrics(affine_align(moved, gt)[1], gt)
    assert m1.delta1 == m2.delta1
    assert abs(m1.absrel - m2.absrel) < 1e-9 and abs(m1.rmse - m2.rmse) < 1e-9


def test_delta1_monotone_in_multiplicative_error(rng):
    gt = rng.uniform(1, 5, 200)
    noise = rng.uniform(0.8, 1.2, 200)
    prev = 1.0
    for k in np.linspace(1.25, 2.0, 16):
        d1 = depth_metrics(_field(gt * noise * k), _field(gt)).delta1
        assert d1 <= prev
        prev = d1


def test_eval_mask_crop_and_caps():
    gt = ScalarField.full(np.linspace(0.5, 12, 480 * 640).reshape(480, 640))
    m = eval_mask(gt, crop="eigen")
    assert m.sum() == (471 - 45) * (601 - 41)
    capped = eval_mask(gt, depth_cap=(1.0, 10.0))
    assert np.all(gt.values[capped] >= 1.0) and np.all(gt.values[capped] <= 10.0)
