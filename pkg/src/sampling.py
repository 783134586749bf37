"""
Must-pass node sampling: local peaks of the distance-to-wall map, thinned by greedy
non-maximum suppression and mapped to the supervoxels that contain them.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

logger = logging.getLogger(__name__)

# Warn when the must-pass set stops being a small fraction of the graph
MAX_MUST_PASS_FRACTION = 0.2


@dataclass(frozen=True)
class MustPassNodeSet:
    """Accepted peaks and their supervoxels, in descending peak-value order.

    Attributes:
        node_ids: Supervoxel ids, one per kept peak, without duplicates.
        peak_positions_mm: (k, 3) physical peak positions.
        peak_values: Distance-map value at each peak (mm).
        theta_v: Minimum peak value used.
        theta_d: Minimum peak spacing used.
        dropped_duplicates: Accepted peaks discarded because their supervoxel was already taken.
    """

    node_ids: tuple = ()
    peak_positions_mm: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    peak_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    theta_v: float = 0.0
    theta_d: float = 0.0
    dropped_duplicates: int = 0

    def __len__(self):
        return len(self.node_ids)


def local_maxima(values, theta_v):
    """
    Voxel indices of local maxima over the 26-neighbourhood with value >= theta_v.

    A plateau (26-connected voxels that all equal their neighbourhood maximum) yields a
    single candidate: its lexicographically smallest voxel.

    Args:
        values (np.ndarray): 3D map.
        theta_v (float): Minimum peak value.

    Returns:
        np.ndarray: (k, 3) integer voxel indices in lexicographic order.
    """
    values = np.asarray(values, dtype=float)
    neighbourhood_max = ndimage.maximum_filter(values, size=3, mode="nearest")
    is_max = (values >= neighbourhood_max) & (values >= theta_v)
    if not is_max.any():
        return np.zeros((0, 3), dtype=int)

    components, n_components = ndimage.label(is_max, structure=np.ones((3, 3, 3), dtype=bool))
    flat_index = np.arange(values.size).reshape(values.shape)
    first = ndimage.minimum(flat_index, components, index=np.arange(1, n_components + 1))
    first = np.sort(np.asarray(first, dtype=np.int64))
    return np.stack(np.unravel_index(first, values.shape), axis=1)


def suppress_peaks(positions_mm, peak_values, theta_d):
    """
    Greedy non-maximum suppression.

    Candidates are visited by descending value (ties: input order, which is lexicographic
    voxel order) and rejected when closer than theta_d to an already accepted peak.

    Returns:
        np.ndarray: Indices of accepted candidates in acceptance order.
    """
    order = np.argsort(-np.asarray(peak_values, dtype=float), kind="stable")
    accepted = []
    for index in order:
        if accepted:
            gaps = np.linalg.norm(positions_mm[accepted] - positions_mm[index], axis=1)
            if np.any(gaps < theta_d):
                continue
        accepted.append(int(index))
    return np.asarray(accepted, dtype=int)


def sample_must_pass(dist, labeling, theta_v, theta_d):
    """
    Sample must-pass nodes as local peaks of the distance map.

    Args:
        dist (Volume): Distance (mm) to the nearest obstacle voxel.
        labeling (SupervoxelLabeling): Supervoxels on the same grid.
        theta_v (float): Minimum peak value in mm.
        theta_d (float): Minimum distance between accepted peaks in mm.

    Returns:
        MustPassNodeSet: Possibly empty set of must-pass supervoxels.
    """
    if theta_v <= 0 or theta_d <= 0:
        raise ValueError("theta_v and theta_d must be > 0")
    if not dist.same_grid(labeling.labels):
        raise ValueError("distance map and labeling grids differ")

    candidates = local_maxima(dist.data, theta_v)
    if len(candidates) == 0:
        logger.warning("no distance-map peak reaches theta_v=%.2f mm", theta_v)
        return MustPassNodeSet(theta_v=theta_v, theta_d=theta_d)

    values = np.asarray(dist.data)[tuple(candidates.T)]
    positions = dist.voxel_to_world(candidates)
    accepted = suppress_peaks(positions, values, theta_d)

    labels = np.asarray(labeling.labels.data)
    node_ids, kept = [], []
    dropped = 0
    for index in accepted:
        node = int(labels[tuple(candidates[index])])
        if node == 0:
            continue
        if node in node_ids:
            dropped += 1
            continue
        node_ids.append(node)
        kept.append(index)

    kept = np.asarray(kept, dtype=int)
    must_pass = MustPassNodeSet(
        node_ids=tuple(node_ids),
        peak_positions_mm=positions[kept] if kept.size else np.zeros((0, 3)),
        peak_values=values[kept] if kept.size else np.zeros(0),
        theta_v=theta_v,
        theta_d=theta_d,
        dropped_duplicates=dropped,
    )
    if dropped:
        logger.info("%d peaks shared a supervoxel with a stronger peak and were dropped", dropped)
    if labeling.count and len(must_pass) >= MAX_MUST_PASS_FRACTION * labeling.count:
        logger.warning(
            "%d must-pass nodes for %d supervoxels; consider a larger theta_d",
            len(must_pass),
            labeling.count,
        )
    return must_pass
