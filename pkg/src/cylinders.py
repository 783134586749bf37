"""
Local cylinder fitting with RANSAC on the binarized wall detection around each must-pass node.

Each hypothesis comes from three wall points: the axis is the normal of their plane and the
circle through them gives the centre and radius. The best hypothesis is refined by least
squares on its inliers. A fit is kept only when it is supported by enough inliers within the
configured radius range.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import least_squares
from scipy.spatial import cKDTree
from tqdm import tqdm

from utils import progress_enabled

logger = logging.getLogger(__name__)

# Candidate hypotheses scored per vectorized batch (bounded by points * batch entries)
_BATCH_ENTRIES = 2_000_000


@dataclass(frozen=True)
class Cylinder:
    """Finite cylinder of fixed height; invalid fits keep the peak position as centre."""

    center_mm: tuple
    axis: tuple
    radius_mm: float
    height_mm: float
    inlier_count: int = 0
    valid: bool = False

    def to_row(self):
        return {
            "cx": self.center_mm[0],
            "cy": self.center_mm[1],
            "cz": self.center_mm[2],
            "ax": self.axis[0],
            "ay": self.axis[1],
            "az": self.axis[2],
            "r": self.radius_mm,
            "h": self.height_mm,
            "inliers": self.inlier_count,
            "valid": int(self.valid),
        }


def _invalid(height_mm, center=(0.0, 0.0, 0.0)):
    return Cylinder(
        center_mm=tuple(float(c) for c in center),
        axis=(0.0, 0.0, 1.0),
        radius_mm=0.0,
        height_mm=float(height_mm),
        inlier_count=0,
        valid=False,
    )


def canonical_axis(axis):
    """Unit axis whose largest-magnitude component is positive."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    if axis[np.argmax(np.abs(axis))] < 0:
        axis = -axis
    return axis


def points_in_cylinder(points, cylinder, tol=1e-9):
    """Boolean mask of points inside the finite cylinder (|axial| <= h/2, radial <= r)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    axis = np.asarray(cylinder.axis, dtype=float)
    offsets = points - np.asarray(cylinder.center_mm, dtype=float)
    axial = offsets @ axis
    radial = np.linalg.norm(offsets - axial[:, None] * axis, axis=1)
    return (np.abs(axial) <= cylinder.height_mm / 2.0 + tol) & (radial <= cylinder.radius_mm + tol)


def point_in_cylinder(point, cylinder):
    return bool(points_in_cylinder(point, cylinder)[0])


def _hypotheses(p1, p2, p3, radius_range):
    """Axis, centre and radius of the circle through each point triple; invalid rows dropped."""
    a = p2 - p1
    b = p3 - p1
    normal = np.cross(a, b)
    norm2 = np.einsum("ij,ij->i", normal, normal)
    scale = np.einsum("ij,ij->i", a, a) * np.einsum("ij,ij->i", b, b)
    ok = norm2 > 1e-12 * np.maximum(scale, 1e-300)

    safe = np.where(ok, norm2, 1.0)
    lever = np.einsum("ij,ij->i", a, a)[:, None] * b - np.einsum("ij,ij->i", b, b)[:, None] * a
    centers = p1 + np.cross(lever, normal) / (2.0 * safe[:, None])
    radii = np.linalg.norm(centers - p1, axis=1)
    axes = normal / np.sqrt(safe)[:, None]

    ok &= (radii >= radius_range[0]) & (radii <= radius_range[1])
    return axes[ok], centers[ok], radii[ok], np.flatnonzero(ok)


def _residuals(points, sq_norms, axes, centers, radii):
    """|radial distance - radius| of every point to every hypothesis, shape (n_points, batch)."""
    sq_dist = sq_norms[:, None] - 2.0 * points @ centers.T + np.einsum("ij,ij->i", centers, centers)
    axial = points @ axes.T - np.einsum("ij,ij->i", centers, axes)
    radial = np.sqrt(np.maximum(sq_dist - axial**2, 0.0))
    return np.abs(radial - radii)


def _radial_residuals(points, axis, center, radius):
    offsets = points - center
    axial = offsets @ axis
    radial = np.linalg.norm(offsets - axial[:, None] * axis, axis=1)
    return radial - radius


def _least_squares_cylinder(points, axis, center, radius, radius_range):
    """Refit axis, centre and radius to points, starting from a hypothesis."""
    helper = np.eye(3)[np.argmin(np.abs(axis))]
    u = np.cross(axis, helper)
    u /= np.linalg.norm(u)
    v = np.cross(axis, u)

    def unpack(x):
        direction = axis + x[2] * u + x[3] * v
        return direction / np.linalg.norm(direction), center + x[0] * u + x[1] * v, x[4]

    def residuals(x):
        return _radial_residuals(points, *unpack(x))

    lower = [-np.inf, -np.inf, -np.inf, -np.inf, radius_range[0]]
    upper = [np.inf, np.inf, np.inf, np.inf, radius_range[1]]
    x0 = np.array([0.0, 0.0, 0.0, 0.0, np.clip(radius, *radius_range)])
    result = least_squares(residuals, x0, bounds=(lower, upper), ftol=1e-10, xtol=1e-10)
    return unpack(result.x)


def refine_cylinder(points, axis, center, radius, inlier_tol_mm, radius_range, rounds=5):
    """
    Least-squares refit of a RANSAC hypothesis on its inliers, repeated on the new inliers.

    A refit is kept while it holds at least 95% of the hypothesis' inlier count.

    Returns:
        tuple: (axis, center, radius, inlier_mask) of the last kept model.
    """
    inlier_mask = np.abs(_radial_residuals(points, axis, center, radius)) <= inlier_tol_mm
    floor = 0.95 * inlier_mask.sum()
    for _ in range(rounds):
        if inlier_mask.sum() < 6:
            break
        fitted = _least_squares_cylinder(points[inlier_mask], axis, center, radius, radius_range)
        mask = np.abs(_radial_residuals(points, *fitted)) <= inlier_tol_mm
        if mask.sum() < floor:
            break
        unchanged = np.array_equal(mask, inlier_mask)
        (axis, center, radius), inlier_mask = fitted, mask
        if unchanged:
            break
    return axis, center, float(radius), inlier_mask


def fit_cylinder_ransac(
    wall_points_mm,
    iterations,
    inlier_tol_mm,
    radius_range,
    seed=0,
    min_support=30,
    height_mm=18.0,
):
    """
    Fit an infinite cylinder with RANSAC and cut it to a fixed height.

    The best hypothesis has the most inliers (ties: smaller sum of inlier residuals, then the
    earlier sample). It is refined with refine_cylinder, then its centre is moved along the axis
    to the mean axial position of its inliers.

    Args:
        wall_points_mm (array-like): (n, 3) wall point positions.
        iterations (int): Number of sampled triples.
        inlier_tol_mm (float): Maximum |radial distance - radius| of an inlier.
        radius_range (tuple[float, float]): Accepted radius interval.
        seed (int | Sequence[int]): Entropy for the Philox stream of this fit.
        min_support (int): Minimum inlier count of a valid fit.
        height_mm (float): Height attached to the result.

    Returns:
        Cylinder: valid=False for fewer than 3 points, no admissible hypothesis, or too few
        inliers.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if inlier_tol_mm <= 0:
        raise ValueError("inlier_tol_mm must be > 0")

    points = np.asarray(wall_points_mm, dtype=float).reshape(-1, 3)
    n_points = len(points)
    if n_points < 3:
        return _invalid(height_mm, points.mean(axis=0) if n_points else (0.0, 0.0, 0.0))

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    triples = rng.integers(0, n_points, size=(iterations, 3))
    distinct = (
        (triples[:, 0] != triples[:, 1])
        & (triples[:, 0] != triples[:, 2])
        & (triples[:, 1] != triples[:, 2])
    )
    triples = triples[distinct]

    sq_norms = np.einsum("ij,ij->i", points, points)
    batch = max(1, _BATCH_ENTRIES // n_points)
    best = None
    best_key = (-1, 0.0)
    for start in range(0, len(triples), batch):
        chunk = triples[start : start + batch]
        axes, centers, radii, _ = _hypotheses(
            points[chunk[:, 0]], points[chunk[:, 1]], points[chunk[:, 2]], radius_range
        )
        if len(radii) == 0:
            continue
        residuals = _residuals(points, sq_norms, axes, centers, radii)
        inliers = residuals <= inlier_tol_mm
        counts = inliers.sum(axis=0)
        sums = np.where(inliers, residuals, 0.0).sum(axis=0)

        top = np.flatnonzero(counts == counts.max())
        pick = top[np.argmin(sums[top])]
        key = (int(counts[pick]), -float(sums[pick]))
        if key > best_key:
            best_key = key
            best = (axes[pick], centers[pick], radii[pick], inliers[:, pick])

    if best is None:
        return _invalid(height_mm, points.mean(axis=0))

    axis, center, radius, _ = best
    axis, center, radius, inlier_mask = refine_cylinder(
        points, axis, center, radius, inlier_tol_mm, radius_range
    )
    axis = canonical_axis(axis)
    axial_shift = ((points[inlier_mask] - center) @ axis).mean()
    center = center + axial_shift * axis
    support = int(inlier_mask.sum())
    return Cylinder(
        center_mm=tuple(float(c) for c in center),
        axis=tuple(float(a) for a in axis),
        radius_mm=float(radius),
        height_mm=float(height_mm),
        inlier_count=support,
        valid=support >= min_support,
    )


def fit_local_cylinders(
    walls_bin,
    peaks,
    patch_mm=36.0,
    height_mm=18.0,
    iterations=50_000,
    inlier_tol_mm=1.0,
    radius_range=(7.04, 15.28),
    min_support=30,
    seed=0,
    threads=None,
):
    """
    Fit one cylinder per must-pass node from the wall voxels in a cube around its peak.

    Fit i draws its samples from Philox(seed, i), so the result does not depend on the
    number of worker threads.

    Args:
        walls_bin (Volume): Binarized wall detection.
        peaks (MustPassNodeSet): Must-pass nodes with peak positions.
        patch_mm (float): Side of the axis-aligned cube centred at each peak.
        threads (int | None): Worker threads; None lets the executor decide.

    Returns:
        list[Cylinder]: One entry per peak, in peak order; empty patches give invalid fits.
    """
    positions = np.asarray(peaks.peak_positions_mm, dtype=float).reshape(-1, 3)
    if len(positions) == 0:
        return []

    wall_points = walls_bin.voxel_to_world(np.argwhere(np.asarray(walls_bin.data, dtype=bool)))
    tree = cKDTree(wall_points) if len(wall_points) else None

    def fit(index):
        peak = positions[index]
        if tree is None:
            return _invalid(height_mm, peak)
        members = sorted(tree.query_ball_point(peak, r=patch_mm / 2.0, p=np.inf))
        cylinder = fit_cylinder_ransac(
            wall_points[members],
            iterations=iterations,
            inlier_tol_mm=inlier_tol_mm,
            radius_range=radius_range,
            seed=[seed, index],
            min_support=min_support,
            height_mm=height_mm,
        )
        if not cylinder.valid:
            cylinder = replace(cylinder, center_mm=tuple(float(c) for c in peak))
        return cylinder

    with ThreadPoolExecutor(max_workers=threads) as executor:
        cylinders = list(
            tqdm(
                executor.map(fit, range(len(positions))),
                total=len(positions),
                desc="cylinders",
                disable=not progress_enabled(),
            )
        )
    n_valid = sum(c.valid for c in cylinders)
    logger.info("fitted %d cylinders, %d valid", len(cylinders), n_valid)
    return cylinders


def cylinder_mesh(cylinder, segments=24):
    """
    Closed triangle mesh of a cylinder for OBJ export.

    Returns:
        tuple[np.ndarray, np.ndarray]: (2 * segments + 2, 3) vertices and (4 * segments, 3)
        zero-based triangle indices.
    """
    axis = np.asarray(cylinder.axis, dtype=float)
    helper = np.eye(3)[np.argmin(np.abs(axis))]
    u = np.cross(axis, helper)
    u /= np.linalg.norm(u)
    v = np.cross(axis, u)

    angles = 2.0 * np.pi * np.arange(segments) / segments
    ring = cylinder.radius_mm * (np.cos(angles)[:, None] * u + np.sin(angles)[:, None] * v)
    half = 0.5 * cylinder.height_mm * axis
    center = np.asarray(cylinder.center_mm, dtype=float)
    vertices = np.vstack([center - half + ring, center + half + ring, center - half, center + half])

    bottom_center, top_center = 2 * segments, 2 * segments + 1
    faces = []
    for k in range(segments):
        nxt = (k + 1) % segments
        faces.append((k, nxt, segments + k))
        faces.append((nxt, segments + nxt, segments + k))
        faces.append((bottom_center, nxt, k))
        faces.append((top_center, segments + k, segments + nxt))
    return vertices, np.asarray(faces, dtype=int)
