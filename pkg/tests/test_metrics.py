# type: ignore

"""
Unit tests for metrics.py

Tests curve construction and resampling, the curve-to-curve distance and
the maximum length tracked without error, including shortcut detection.
"""

import math
import pytest
import sys
import os

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from metrics import (
    Curve,
    curve_to_curve_distance,
    evaluate_curves,
    max_length_without_error,
    resample_curve,
)


def line(start, end, n=50):
    return Curve.from_points(np.linspace(start, end, n))


def hairpin(leg_mm=200.0, bend_radius=6.0, return_to=None):
    """Out along x, half circle, back along x at y = 2 * bend_radius."""
    leg_a = np.linspace([0.0, 0.0, 0.0], [leg_mm, 0.0, 0.0], int(leg_mm) + 1)
    angles = np.linspace(-np.pi / 2, np.pi / 2, 60)[1:-1]
    bend = np.stack(
        [leg_mm + bend_radius * np.cos(angles), bend_radius + bend_radius * np.sin(angles), 0 * angles],
        axis=1,
    )
    back = 0.0 if return_to is None else return_to
    leg_b = np.linspace([leg_mm, 2 * bend_radius, 0.0], [back, 2 * bend_radius, 0.0], int(leg_mm - back) + 1)
    return Curve.from_points(np.vstack([leg_a, bend, leg_b]))


class TestCurve:
    """Test suite for curve construction and resampling"""

    def test_arc_length(self):
        """Test cumulative arc length of a polyline"""
        curve = Curve.from_points([[0, 0, 0], [3, 4, 0], [3, 4, 12]])
        np.testing.assert_allclose(curve.arc_length, [0.0, 5.0, 17.0])
        assert curve.length == pytest.approx(17.0)

    @pytest.mark.parametrize(
        "points",
        [
            [[0, 0, 0]],
            [[0, 0], [1, 1]],
            [[0, 0, 0], [np.nan, 0, 0]],
        ],
    )
    def test_invalid_points(self, points):
        """Test that short, flat or non-finite inputs raise ValueError"""
        with pytest.raises(ValueError):
            Curve.from_points(points)

    def test_resample_spacing_and_endpoints(self):
        """Test that resampling keeps endpoints and length with steps of at most 1 mm"""
        curve = Curve.from_points([[0, 0, 0], [10.5, 0, 0], [10.5, 7.2, 0]])
        resampled = resample_curve(curve, 1.0)
        np.testing.assert_allclose(resampled.points[0], curve.points[0])
        np.testing.assert_allclose(resampled.points[-1], curve.points[-1])
        assert np.all(np.diff(resampled.arc_length) <= 1.0 + 1e-9)
        assert resampled.length <= curve.length + 1e-9
        assert resampled.length == pytest.approx(curve.length, abs=0.5)

    def test_resample_zero_length(self):
        """Test that a curve of repeated points resamples to two copies"""
        resampled = resample_curve(Curve.from_points([[1, 2, 3]] * 4), 1.0)
        assert resampled.points.shape == (2, 3)
        assert resampled.length == 0.0

    def test_resample_invalid_step(self):
        """Test that a non-positive step is rejected"""
        with pytest.raises(ValueError):
            resample_curve(line([0, 0, 0], [1, 0, 0]), 0.0)


class TestCurveToCurveDistance:
    """Test suite for the symmetric curve-to-curve distance"""

    def test_identical_curves(self):
        """Test that a curve is at distance zero from itself"""
        curve = hairpin()
        assert curve_to_curve_distance(curve, curve).c2c_mm == pytest.approx(0.0, abs=1e-9)

    def test_parallel_offset(self):
        """Test that parallel lines 5 mm apart are at distance 5"""
        pred = line([0, 5, 0], [100, 5, 0])
        gt = line([0, 0, 0], [100, 0, 0])
        assert curve_to_curve_distance(pred, gt).c2c_mm == pytest.approx(5.0)

    def test_matches_brute_force(self):
        """Test agreement with an all-pairs computation on the raw vertices"""
        rng = np.random.default_rng(8)
        for _ in range(20):
            a = np.cumsum(rng.normal(size=(rng.integers(2, 40), 3)), axis=0)
            b = np.cumsum(rng.normal(size=(rng.integers(2, 40), 3)), axis=0)
            pairwise = np.linalg.norm(a[:, None] - b[None, :], axis=2)
            expected = (pairwise.min(axis=1).mean() + pairwise.min(axis=0).mean()) / 2.0
            result = curve_to_curve_distance(Curve.from_points(a), Curve.from_points(b), None)
            assert result.c2c_mm == pytest.approx(expected)
            assert result.pred_to_gt_mm == pytest.approx(pairwise.min(axis=1).mean())

    def test_symmetric(self):
        """Test that swapping the curves keeps the distance"""
        a = line([0, 0, 0], [50, 10, 0])
        b = hairpin(60.0)
        assert curve_to_curve_distance(a, b).c2c_mm == pytest.approx(
            curve_to_curve_distance(b, a).c2c_mm
        )


class TestMaxLengthWithoutError:
    """Test suite for the longest error-free tracked span"""

    def test_perfect_prediction(self):
        """Test that the ground truth itself covers its full length"""
        gt = hairpin()
        assert max_length_without_error(gt, gt) == pytest.approx(gt.length, abs=1.0)

    def test_shortcut_through_wall_detected(self):
        """Test that a hop between the hairpin legs ends the error-free span"""
        a = (400.0 + 6.0 * math.pi) / 3.0
        gt = hairpin(200.0, 6.0, return_to=a)
        pred = Curve.from_points(
            np.vstack([np.linspace([0.0, 0, 0], [a, 0, 0], 200), [[a, 12.0, 0.0]]])
        )
        assert gt.length == pytest.approx(2 * a, abs=1.0)
        assert max_length_without_error(pred, gt) == pytest.approx(a, abs=2.0)

    def test_far_prediction_scores_zero(self):
        """Test that a path farther than dist_tol from the ground truth scores 0"""
        gt = line([0, 0, 0], [100, 0, 0])
        pred = line([50, 30, -40], [50, 30, 40])
        assert max_length_without_error(pred, gt) == 0.0

    def test_distance_error_splits_run(self):
        """Test that a detour beyond dist_tol splits the run"""
        gt = line([0, 0, 0], [100, 0, 0], n=101)
        points = np.linspace([0.0, 0, 0], [100.0, 0, 0], 101)
        points[60:70, 1] = 15.0
        span = max_length_without_error(Curve.from_points(points), gt)
        assert 55.0 <= span <= 61.0

    def test_reverse_invariant(self):
        """Test that reversing the prediction does not change the metrics"""
        gt = hairpin(120.0)
        pred = Curve.from_points(gt.points[:150] + np.array([0.0, 0.0, 2.0]))
        forward = evaluate_curves(pred, gt)
        backward = evaluate_curves(pred.reversed(), gt)
        assert forward.max_len_no_error_mm == pytest.approx(backward.max_len_no_error_mm)
        assert forward.c2c_mm == pytest.approx(backward.c2c_mm)

    def test_bounded_by_gt_length(self):
        """Test that random predictions never exceed the ground-truth length"""
        rng = np.random.default_rng(1)
        gt = hairpin(80.0)
        for _ in range(10):
            pred = Curve.from_points(np.cumsum(rng.normal(scale=4.0, size=(60, 3)), axis=0) + [40, 6, 0])
            span = max_length_without_error(pred, gt)
            assert 0.0 <= span <= gt.length + 1e-9


def test_evaluate_curves_report():
    """Test that the report carries the metrics, the GT length and the parameters"""
    gt = line([0, 0, 0], [100, 0, 0])
    report = evaluate_curves(line([0, 3, 0], [100, 3, 0]), gt, jump_tol_mm=15.0)
    data = report.to_dict()
    assert data["c2c_mm"] == pytest.approx(3.0)
    assert data["max_len_no_error_mm"] == pytest.approx(100.0)
    assert data["gt_length_mm"] == pytest.approx(100.0)
    assert data["params"] == {"jump_tol_mm": 15.0, "dist_tol_mm": 10.0, "resample_mm": 1.0}
