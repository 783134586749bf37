"""
Path evaluation against a ground-truth centerline: curve-to-curve (C2C) distance and the
maximum ground-truth length tracked without error.

An error is either a jump of the mapped ground-truth arc coordinate by more than
jump_tol_mm between consecutive predicted points (the signature of a shortcut through a
wall) or a predicted point farther than dist_tol_mm from the ground truth.
"""

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Curve:
    """Ordered 3D polyline with cumulative arc length."""

    points: np.ndarray
    arc_length: np.ndarray

    @classmethod
    def from_points(cls, points):
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != 3:
            raise ValueError(f"curve points must have shape (n, 3), got {points.shape}")
        if len(points) < 2:
            raise ValueError("a curve needs at least 2 points")
        if not np.all(np.isfinite(points)):
            raise ValueError("curve points must be finite")
        steps = np.linalg.norm(np.diff(points, axis=0), axis=1)
        return cls(points=points, arc_length=np.concatenate([[0.0], np.cumsum(steps)]))

    @property
    def length(self):
        return float(self.arc_length[-1])

    def reversed(self):
        return Curve.from_points(self.points[::-1])


def resample_curve(curve, step_mm=1.0):
    """
    Resample a curve to uniform arc-length spacing of at most step_mm.

    Both endpoints are kept; a zero-length curve becomes two copies of its point.
    """
    if step_mm <= 0:
        raise ValueError("step_mm must be > 0")
    keep = np.concatenate([[True], np.diff(curve.arc_length) > 0])
    points, arc = curve.points[keep], curve.arc_length[keep]
    if len(points) < 2:
        return Curve.from_points(np.vstack([points[0], points[0]]))
    n_steps = max(int(np.ceil(arc[-1] / step_mm - 1e-9)), 1)
    samples = np.linspace(0.0, arc[-1], n_steps + 1)
    resampled = np.stack([np.interp(samples, arc, points[:, axis]) for axis in range(3)], axis=1)
    return Curve.from_points(resampled)


@dataclass(frozen=True)
class CurveDistance:
    c2c_mm: float
    pred_to_gt_mm: float
    gt_to_pred_mm: float


@dataclass(frozen=True)
class MetricsReport:
    c2c_mm: float
    pred_to_gt_mm: float
    gt_to_pred_mm: float
    max_len_no_error_mm: float
    gt_length_mm: float
    params: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def curve_to_curve_distance(pred, gt, resample_mm=1.0):
    """
    Symmetric mean nearest-point distance between two curves.

    Args:
        pred (Curve): Predicted path.
        gt (Curve): Ground-truth path.
        resample_mm (float | None): Spacing of the uniform resampling applied to both curves
            first; None compares the given vertices.

    Returns:
        CurveDistance: Both directed means and their average.
    """
    if resample_mm is not None:
        pred, gt = resample_curve(pred, resample_mm), resample_curve(gt, resample_mm)
    pred_to_gt = float(cKDTree(gt.points).query(pred.points)[0].mean())
    gt_to_pred = float(cKDTree(pred.points).query(gt.points)[0].mean())
    return CurveDistance(
        c2c_mm=(pred_to_gt + gt_to_pred) / 2.0,
        pred_to_gt_mm=pred_to_gt,
        gt_to_pred_mm=gt_to_pred,
    )


def _longest_error_free_span(coords, close_enough, jump_tol_mm):
    best = 0.0
    low = high = None
    previous = None
    for coord, ok in zip(coords, close_enough):
        if not ok:
            low = high = previous = None
            continue
        if previous is not None and abs(coord - previous) > jump_tol_mm:
            low = high = None
        low = coord if low is None else min(low, coord)
        high = coord if high is None else max(high, coord)
        best = max(best, high - low)
        previous = coord
    return best


def max_length_without_error(pred, gt, jump_tol_mm=20.0, dist_tol_mm=10.0, resample_mm=1.0):
    """
    Largest ground-truth arc-length span covered by an error-free run of the prediction.

    Each predicted point is mapped to the arc coordinate of its nearest ground-truth point;
    runs are split at coordinate jumps above jump_tol_mm and at points farther than
    dist_tol_mm. Both orientations of the prediction are scanned.

    Returns:
        float: Span in mm, between 0 and the ground-truth length.
    """
    if resample_mm is not None:
        pred, gt = resample_curve(pred, resample_mm), resample_curve(gt, resample_mm)
    distances, nearest = cKDTree(gt.points).query(pred.points)
    coords = gt.arc_length[nearest]
    close_enough = distances <= dist_tol_mm
    return max(
        _longest_error_free_span(coords, close_enough, jump_tol_mm),
        _longest_error_free_span(coords[::-1], close_enough[::-1], jump_tol_mm),
    )


def evaluate_curves(pred, gt, jump_tol_mm=20.0, dist_tol_mm=10.0, resample_mm=1.0):
    """Full metrics report of a predicted path against ground truth."""
    distance = curve_to_curve_distance(pred, gt, resample_mm)
    max_len = max_length_without_error(pred, gt, jump_tol_mm, dist_tol_mm, resample_mm)
    report = MetricsReport(
        c2c_mm=distance.c2c_mm,
        pred_to_gt_mm=distance.pred_to_gt_mm,
        gt_to_pred_mm=distance.gt_to_pred_mm,
        max_len_no_error_mm=float(max_len),
        gt_length_mm=gt.length,
        params={
            "jump_tol_mm": jump_tol_mm,
            "dist_tol_mm": dist_tol_mm,
            "resample_mm": resample_mm,
        },
    )
    logger.debug("metrics: c2c=%.3f max_len=%.1f", report.c2c_mm, report.max_len_no_error_mm)
    return report
