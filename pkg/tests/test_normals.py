import math
import statistics

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from editeval.core import NormalField, RasterImage, ShapeError, read_image, write_image
from editeval.normals import (
    IDENTITY,
    MIN_NORM_8BIT,
    AxisConvention,
    NoValidPixelsError,
    NormalAccumulator,
    all_conventions,
    angular_error,
    apply_convention,
    calibrate_convention,
    decode_normals,
    encode_normals,
    normal_metrics,
)
from tests.conftest import random_unit_field


def brute_normal_metrics(errors):
    errs = [float(e) for e in errors]
    pct = [100.0 * sum(e < t for e in errs) / len(errs) for t in (11.25, 22.5, 30.0)]
    return (sum(errs) / len(errs), statistics.median(errs), *pct)


def _one(v):
    v = np.asarray(v, dtype=float)
    return NormalField(v.reshape(1, 1, 3), np.ones((1, 1), bool))


@pytest.mark.parametrize("n, rgb", [
    ((0, 0, 1), (0.5, 0.5, 1.0)),
    ((1, 0, 0), (1.0, 0.5, 0.5)),
    ((0, -1, 0), (0.5, 0.0, 0.5)),
])
def test_encode(n, rgb):
    assert encode_normals(_one(n)).pixels[0, 0].tolist() == list(rgb)


def test_encode_invalid_is_mid_gray():
    f = NormalField(np.zeros((1, 1, 3)), np.zeros((1, 1), bool))
    assert encode_normals(f).pixels[0, 0].tolist() == [0.5, 0.5, 0.5]


def test_decode():
    img = RasterImage(np.array([[[0.5, 0.5, 1.0], [1.0, 1.0, 1.0], [0.5, 0.5, 0.5]]]))
    f = decode_normals(img)
    assert f.vectors[0, 0].tolist() == [0.0, 0.0, 1.0]
    np.testing.assert_allclose(f.vectors[0, 1], np.ones(3) / math.sqrt(3), atol=1e-15)
    assert f.valid.tolist() == [[True, True, False]]


def test_decode_8bit_gray_is_invalid_with_quantized_threshold():
    img = RasterImage(np.array([[[128, 128, 128], [127, 128, 127]]]) / 255.0)
    assert not decode_normals(img, min_norm=MIN_NORM_8BIT).valid.any()


def test_codec_round_trip(rng):
    f = random_unit_field(rng, 8, 8)
    back = decode_normals(encode_normals(f))
    np.testing.assert_allclose(back.vectors, f.vectors, atol=1e-6)


def test_codec_round_trip_through_png(rng, tmp_path):
    f = random_unit_field(rng, 16, 16)
    write_image(encode_normals(f), tmp_path / "n.png")
    back = decode_normals(read_image(tmp_path / "n.png"), min_norm=MIN_NORM_8BIT)
    assert back.valid.all()
    assert np.max(np.abs(back.vectors - f.vectors)) <= 2 / 255


def test_there_are_48_distinct_conventions():
    convs = all_conventions()
    assert len(set(convs)) == 48
    assert convs[0] == IDENTITY


def test_conventions_form_a_group():
    convs = set(all_conventions())
    for c in convs:
        assert c.inverse() in convs
        assert c.then(c.inverse()) == IDENTITY
        for d in list(convs)[:6]:
            assert c.then(d) in convs


def test_convention_matrix_is_orthogonal():
    for c in all_conventions():
        np.testing.assert_array_equal(c.matrix @ c.matrix.T, np.eye(3))


def test_apply_examples():
    assert apply_convention(_one((1, 0, 0)), AxisConvention((0, 1, 2), (-1, 1, 1))).vectors[0, 0].tolist() == [-1, 0, 0]
    swapped = apply_convention(_one((0.6, 0.8, 0)), AxisConvention((1, 0, 2), (1, 1, 1)))
    assert swapped.vectors[0, 0].tolist() == [0.8, 0.6, 0.0]
    f = _one((0.6, 0.8, 0))
    assert np.array_equal(apply_convention(f, IDENTITY).vectors, f.vectors)


def test_composition_matches_sequential_application(rng):
    v = rng.normal(size=(10, 3))
    convs = all_conventions()
    for i in range(0, 48, 7):
        for j in range(0, 48, 5):
            c, d = convs[i], convs[j]
            np.testing.assert_array_equal(c.then(d).apply(v), d.apply(c.apply(v)))


def test_apply_then_inverse_is_exact(rng):
    f = random_unit_field(rng, 5, 5)
    for c in all_conventions():
        back = apply_convention(apply_convention(f, c), c.inverse())
        assert np.array_equal(back.vectors, f.vectors)


@pytest.mark.parametrize("p, g, deg", [
    ((0, 0, 1), (0, 0, 1), 0.0),
    ((1, 0, 0), (0, 1, 0), 90.0),
    ((0, 0, 1), (0, 0, -1), 180.0),
])
def test_angular_error_examples(p, g, deg):
    assert angular_error(_one(p), _one(g))[0] == pytest.approx(deg, abs=1e-12)


def test_angular_error_matches_arccos_formula(rng):
    p = random_unit_field(rng, 10, 10)
    g = random_unit_field(rng, 10, 10)
    dots = np.clip(np.sum(p.vectors * g.vectors, axis=-1), -1, 1).ravel()
    np.testing.assert_allclose(angular_error(p, g), np.degrees(np.arccos(dots)), atol=1e-6)


def test_angular_error_symmetric_and_masked(rng):
    p = random_unit_field(rng, 6, 6, valid_frac=0.7)
    g = random_unit_field(rng, 6, 6, valid_frac=0.7)
    e = angular_error(p, g)
    assert len(e) == np.sum(p.valid & g.valid)
    np.testing.assert_array_equal(e, angular_error(g, p))


def test_angular_error_shape_mismatch(rng):
    with pytest.raises(ShapeError):
        angular_error(random_unit_field(rng, 2, 2), random_unit_field(rng, 2, 3))


def test_calibration_identity(rng):
    gt = random_unit_field(rng, 8, 8)
    calib = calibrate_convention([(gt, gt)])
    assert calib.convention == IDENTITY
    assert calib.best_error == 0.0


def test_calibration_recovers_every_injected_convention(rng):
    gts = [random_unit_field(rng, 6, 6, valid_frac=0.9) for _ in range(3)]
    for c in all_conventions():
        samples = [(apply_convention(g, c), g) for g in gts]
        calib = calibrate_convention(samples)
        assert calib.convention == c.inverse()
        assert calib.best_error == 0.0


def test_calibration_uses_first_k_samples(rng):
    gt = random_unit_field(rng, 4, 4)
    c = all_conventions()[17]
    good = [(apply_convention(gt, c), gt)] * 5
    noise = [(random_unit_field(rng, 4, 4), gt)] * 20
    assert calibrate_convention(good + noise, k=5).convention == c.inverse()


def test_calibration_on_unrelated_fields_is_near_90(rng):
    samples = [(random_unit_field(rng, 32, 32), random_unit_field(rng, 32, 32)) for _ in range(5)]
    calib = calibrate_convention(samples)
    assert abs(calib.best_error - 90.0) < 5.0
    assert calib.best_error <= calib.mean_errors[0]


def test_calibration_never_worse_than_identity(rng):
    for _ in range(5):
        gt = random_unit_field(rng, 8, 8)
        noisy = NormalField(
            (v := gt.vectors + rng.normal(0, 0.3, gt.vectors.shape)) / np.linalg.norm(v, axis=-1, keepdims=True),
            gt.valid,
        )
        calib = calibrate_convention([(noisy, gt)])
        assert calib.best_error <= calib.mean_errors[0]


def test_calibration_errors():
    with pytest.raises(ValueError):
        calibrate_convention([])
    empty = NormalField(np.zeros((2, 2, 3)), np.zeros((2, 2), bool))
    with pytest.raises(NoValidPixelsError):
        calibrate_convention([(empty, empty)])


def test_metrics_constant():
    m = normal_metrics(np.full(7, 10.0))
    assert (m.mean_deg, m.median_deg, m.a11, m.a22, m.a30) == (10.0, 10.0, 100.0, 100.0, 100.0)


def test_metrics_order_statistics():
    m = normal_metrics([0.0, 20.0, 40.0, 100.0])
    assert (m.mean_deg, m.median_deg, m.a11, m.a22, m.a30) == (40.0, 30.0, 25.0, 50.0, 50.0)


def test_metrics_threshold_is_strict():
    m = normal_metrics([11.25])
    assert m.a11 == 0.0 and m.a22 == 100.0


def test_metrics_empty():
    with pytest.raises(NoValidPixelsError):
        normal_metrics([])


def test_metrics_match_loop_oracle(rng):
    for _ in range(20):
        e = rng.uniform(0, 60, int(rng.integers(1, 80)))
        m = normal_metrics(e)
        ref = brute_normal_metrics(e)
        got = (m.mean_deg, m.median_deg, m.a11, m.a22, m.a30)
        assert all(abs(a - b) <= 1e-12 for a, b in zip(got, ref))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 180), min_size=1, max_size=50))
def test_thresholds_are_ordered(errors):
    m = normal_metrics(errors)
    assert m.a11 <= m.a22 <= m.a30
    assert 0 <= m.median_deg <= 180


def test_accumulator_matches_pooled_metrics(rng):
    chunks = [rng.uniform(0, 90, n) for n in (10, 0, 33, 7)]
    acc = NormalAccumulator()
    for c in chunks:
        acc.add(c)
    pooled = normal_metrics(np.concatenate(chunks))
    m = acc.metrics()
    assert m.a11 == pooled.a11 and m.a22 == pooled.a22 and m.a30 == pooled.a30
    assert m.mean_deg == pytest.approx(pooled.mean_deg, abs=1e-12)
    assert m.median_deg == pytest.approx(pooled.median_deg, abs=1e-4)
