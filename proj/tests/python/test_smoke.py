"""Smoke tests for the python bindings of the compiled core."""

import math

import numpy as np
import pytest

import calens


def test_analytic_probability():
    assert calens.analytic_probability(0.0) == pytest.approx(0.5)
    assert calens.analytic_probability(1.0) == pytest.approx(0.880797, abs=1e-6)
    xs = np.linspace(-3, 3, 31)
    probs = calens.analytic_probability(xs)
    assert np.all(np.diff(probs) > 0)
    assert np.allclose(probs + calens.analytic_probability(-xs), 1.0)


def test_generate_gaussian1d_deterministic():
    xs, labels = calens.generate_gaussian1d(1000, seed=7)
    xs2, labels2 = calens.generate_gaussian1d(1000, seed=7)
    assert np.array_equal(xs, xs2)
    assert np.array_equal(labels, labels2)
    assert 0.4 < labels.mean() < 0.6


def test_generate_blob2d():
    images, gt, prior = calens.generate_blob2d(2, 16, 16, seed=3)
    assert len(images) == 2 and len(gt) == 2
    assert images[0].shape == (16, 16)
    assert 0.0 < gt[0].mean() < 1.0
    assert prior.min() >= 0.0 and prior.max() <= 1.0


def test_losses_match_hand_values():
    y = np.array([[0, 1]], dtype=np.uint8)
    p = np.array([[0.5, 0.5]])
    loss, grad = calens.weighted_cross_entropy(y, p, [0.0])
    assert loss == pytest.approx(math.log(2.0))
    assert grad.shape == (1, 2)

    loss_w, _ = calens.weighted_cross_entropy(y, p, [-1.0])
    assert loss_w == pytest.approx(math.e * math.log(2.0))

    tv, _ = calens.weighted_tversky_loss(y, np.array([[0.0, 1.0]]), [0.0])
    assert tv == 0.0

    both, grad_both = calens.combined_loss(y, p, [0.0])
    ce, gce = calens.weighted_cross_entropy(y, p, [0.0])
    t, gt_ = calens.weighted_tversky_loss(y, p, [0.0])
    assert both == ce + t
    assert np.array_equal(grad_both, gce + gt_)


def test_calibration_solve_hand_fixture():
    hist = calens.PatternHistogram(2)
    hist.add(0b11, 10, 9)
    hist.add(0b01, 10, 4)
    hist.add(0b10, 10, 1)
    hist.add(0b00, 10, 0)
    coeffs = calens.solve_coefficients(hist)
    assert coeffs.a == pytest.approx([8.0 / 15.0, 3.5 / 15.0], abs=1e-9)
    assert coeffs.zero_pattern_voxels == 10
    assert not coeffs.degenerate


def test_count_compose_and_mean():
    m0 = np.array([1, 1, 0, 0], dtype=np.uint8)
    m1 = np.array([1, 0, 1, 0], dtype=np.uint8)
    gt = np.array([1, 0, 0, 0], dtype=np.uint8)
    hist = calens.count_patterns([m0, m1], gt)
    assert hist.entries()[0b11] == (1, 1)

    heatmap, lo, hi = calens.compose_heatmap([m0, m1], [0.5, 0.5])
    assert lo == 0 and hi == 0
    assert np.allclose(heatmap, calens.mean_heatmap([m0, m1]))


def test_evaluation_metrics():
    s = np.array([1, 1, 1, 0, 0], dtype=np.uint8)
    p = np.array([1, 1, 0, 1, 0], dtype=np.uint8)
    assert calens.dsc(s, p) == pytest.approx(100.0 * 4.0 / 6.0)
    assert calens.estimated_dsc(s.astype(np.float64), p) == calens.dsc(s, p)

    h = np.full(1000, 0.9)
    gt = np.array([1, 0] * 500, dtype=np.uint8)
    assert calens.expected_calibration_error(h, gt, bins=10) == pytest.approx(0.4)

    masks = [s, p]
    assert calens.union_sensitivity(masks, s) == pytest.approx(100.0)
    empty = np.zeros(5, dtype=np.uint8)
    assert calens.union_sensitivity(masks, empty) is None


def test_calibration_curve_planted():
    rng = np.random.default_rng(0)
    h = rng.random(20000)
    gt = (rng.random(20000) < h).astype(np.uint8)
    curve = calens.calibration_curve(h, gt, bandwidth=0.05)
    points = np.asarray(curve.eval_points)
    rates = np.asarray(curve.observed_fg_rate)
    valid = np.asarray(curve.valid)
    assert valid.any()
    assert np.nanmax(np.abs(rates[valid] - points[valid])) < 0.06


def test_training_roundtrip():
    xs, labels = calens.generate_gaussian1d(800, seed=5)
    features = [np.array([x]) for x in xs]
    masks = [np.array([l], dtype=np.uint8) for l in labels]
    params = calens.TrainerParams()
    params.epochs = 150
    model = calens.train_member(features, masks, "logistic", 0.0, 3, params)
    assert abs(model.decision_threshold()) < 0.5
    pred = calens.predict_mask(model, np.array([-3.0, 3.0]))
    assert pred.tolist() == [0, 1]


def test_file_roundtrip(tmp_path):
    mask = np.array([0, 1, 1, 0], dtype=np.uint8)
    calens.write_mask(tmp_path / "m.calb", mask)
    assert np.array_equal(calens.read_array(tmp_path / "m.calb"), mask)

    heat = np.array([[0.25, 0.75], [1.0, 0.0]])
    calens.write_heatmap(tmp_path / "h.calb", heat)
    assert np.array_equal(calens.read_array(tmp_path / "h.calb"), heat)


def test_errors_are_translated():
    with pytest.raises(calens.CalensError):
        calens.dsc(np.array([0, 1], dtype=np.uint8), np.array([0, 1, 1], dtype=np.uint8))
