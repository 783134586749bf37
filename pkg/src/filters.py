"""
Wall (valley) detection with the Meijering neuriteness construction and the exact
Euclidean distance transform used for must-pass node sampling.
"""

import logging

import numpy as np
from scipy import ndimage
from skimage.feature import hessian_matrix, hessian_matrix_eigvals

logger = logging.getLogger(__name__)


def _valley_response(image, sigma_vox):
    """Scale-normalized valley strength at one Gaussian scale.

    Modified eigenvalues follow the neuriteness construction
    l'_i = l_i + (l_1 + l_2 + l_3) / 3; the one with the largest magnitude is kept when
    positive (positive curvature = dark structure between brighter surroundings).
    """
    h_elems = hessian_matrix(
        image, sigma=sigma_vox, mode="nearest", order="rc", use_gaussian_derivatives=False
    )
    eigvals = hessian_matrix_eigvals(h_elems) * sigma_vox**2
    modified = eigvals + eigvals.sum(axis=0, keepdims=True) / 3.0
    strongest = np.take_along_axis(modified, np.abs(modified).argmax(axis=0)[None], axis=0)[0]
    return np.maximum(strongest, 0.0)


def meijering_valley(volume, scales_mm, bright_lumen=True):
    """
    Multi-scale valley (wall) detection.

    Args:
        volume (Volume): Intensity volume.
        scales_mm (Iterable[float]): Gaussian scales in mm; at least one must be > 0.
        bright_lumen (bool): True when walls are darker than the lumen (oral contrast);
            False detects bright walls instead.

    Returns:
        Volume: Wall detection map on the input grid, min-max normalized to [0, 1].
    """
    scales = [float(s) for s in scales_mm if s > 0]
    if not scales:
        raise ValueError("meijering_valley needs at least one scale > 0")

    image = np.asarray(volume.data, dtype=float)
    if not bright_lumen:
        image = -image

    spacing = volume.spacing_mm
    response = np.zeros(image.shape, dtype=float)
    for scale in scales:
        np.maximum(response, _valley_response(image, scale / spacing), out=response)

    low, high = response.min(), response.max()
    if high > low:
        response = (response - low) / (high - low)
    else:
        response = np.zeros_like(response)
    logger.debug("valley response computed at scales %s mm", scales)
    return volume.with_data(response)


def binarize_walls(walls, threshold):
    """
    Binarize a wall detection map.

    Args:
        walls (Volume): Map with values in [0, 1].
        threshold (float): Value in (0, 1); voxels >= threshold are wall.

    Returns:
        Volume: Boolean mask on the same grid.
    """
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    return walls.with_data(np.asarray(walls.data) >= threshold)


def wall_obstacles(segmentation, walls_bin):
    """Obstacle set for the distance map: outside the segmentation OR on a detected wall."""
    if not segmentation.same_grid(walls_bin):
        raise ValueError("segmentation and wall mask grids differ")
    obstacles = ~np.asarray(segmentation.data, dtype=bool) | np.asarray(walls_bin.data, dtype=bool)
    return segmentation.with_data(obstacles)


def euclidean_distance_transform(obstacles, spacing_mm):
    """
    Exact Euclidean distance (mm) from every voxel to the nearest obstacle voxel.

    Args:
        obstacles (Volume): Boolean obstacle mask.
        spacing_mm (float): Isotropic voxel size.

    Returns:
        Volume: Distance map; zero exactly on obstacles.

    Raises:
        ValueError: If the obstacle set is empty (distance undefined).
    """
    mask = np.asarray(obstacles.data, dtype=bool)
    if not mask.any():
        raise ValueError("distance transform needs at least one obstacle voxel")
    if spacing_mm <= 0:
        raise ValueError("spacing_mm must be > 0")
    distance = ndimage.distance_transform_edt(~mask, sampling=float(spacing_mm))
    return obstacles.with_data(distance)
