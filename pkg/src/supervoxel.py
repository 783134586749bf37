"""
Mask-restricted supervoxels computed with Adaptive-SLIC (SLIC-zero) on the wall detection map.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from skimage.segmentation import relabel_sequential, slic

from volume_io import Volume

logger = logging.getLogger(__name__)

FACE_OFFSETS = np.array(
    [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)], dtype=int
)


@dataclass(frozen=True)
class SupervoxelLabeling:
    """Voxel-to-supervoxel map with per-supervoxel statistics.

    Ids run from 1 to count; id 0 marks voxels outside the mask. Per-id arrays have
    count + 1 rows so they can be indexed by id directly (row 0 is unused).
    """

    labels: Volume
    count: int
    centroids_mm: np.ndarray
    mean_feature: np.ndarray
    sizes: np.ndarray

    @property
    def mean_position(self):
        return self.centroids_mm

    def centroid(self, node):
        return self.centroids_mm[node]

    def boundary_mask(self):
        """Voxels with a face neighbour carrying a different non-zero id."""
        labels = np.asarray(self.labels.data)
        boundary = np.zeros(labels.shape, dtype=bool)
        for axis in range(3):
            lo = [slice(None)] * 3
            hi = [slice(None)] * 3
            lo[axis] = slice(None, -1)
            hi[axis] = slice(1, None)
            a, b = labels[tuple(lo)], labels[tuple(hi)]
            differs = (a != b) & (a > 0) & (b > 0)
            boundary[tuple(lo)] |= differs
            boundary[tuple(hi)] |= differs
        return self.labels.with_data(boundary)


def snap_to_supervoxel(labeling, point_mm):
    """Id of the supervoxel containing a physical point; 0 when outside the labeling."""
    index = labeling.labels.voxel_index(point_mm)
    if index is None:
        return 0
    return int(labeling.labels.data[index])


def _orphan_target(labels, coords, own_label):
    """Face-adjacent label sharing the most faces with an orphan component (ties: smallest id)."""
    shape = np.asarray(labels.shape)
    neighbours = (coords[:, None, :] + FACE_OFFSETS[None, :, :]).reshape(-1, 3)
    inside = np.all((neighbours >= 0) & (neighbours < shape), axis=1)
    neighbours = neighbours[inside]
    values = labels[neighbours[:, 0], neighbours[:, 1], neighbours[:, 2]]
    values = values[(values > 0) & (values != own_label)]
    if values.size == 0:
        return None
    ids, counts = np.unique(values, return_counts=True)
    return int(ids[np.argmax(counts)])


def enforce_connectivity(labels):
    """
    Make every label a single 26-connected component.

    The largest component of each label keeps the id; every other (orphan) component is
    relabeled to its face-adjacent supervoxel with the longest shared boundary, or gets a
    fresh id when it touches no other supervoxel.

    Args:
        labels (np.ndarray): Integer label array, 0 = background.

    Returns:
        np.ndarray: Relabeled copy.
    """
    labels = np.array(labels, copy=True)
    structure = np.ones((3, 3, 3), dtype=bool)
    orphans = []
    for label, region_slice in enumerate(ndimage.find_objects(labels), start=1):
        if region_slice is None:
            continue
        components, n_components = ndimage.label(labels[region_slice] == label, structure)
        if n_components <= 1:
            continue
        sizes = np.bincount(components.ravel())[1:]
        keep = int(np.argmax(sizes)) + 1
        offset = np.array([s.start for s in region_slice])
        for component in range(1, n_components + 1):
            if component != keep:
                coords = np.argwhere(components == component) + offset
                orphans.append((label, coords))

    next_label = int(labels.max()) + 1
    for own_label, coords in orphans:
        target = _orphan_target(labels, coords, own_label)
        if target is None:
            target = next_label
            next_label += 1
        labels[coords[:, 0], coords[:, 1], coords[:, 2]] = target
    if orphans:
        logger.debug("relabeled %d orphan supervoxel components", len(orphans))
    return labels


def labeling_from_labels(labels, feature):
    """
    Build a SupervoxelLabeling (centroids, sizes, mean feature) from an id array.

    Args:
        labels (Volume): Integer ids, 0 = outside.
        feature (Volume): Feature map on the same grid.

    Returns:
        SupervoxelLabeling: Statistics indexed by id.
    """
    ids = np.asarray(labels.data).astype(np.int64)
    count = int(ids.max()) if ids.size else 0
    flat = ids.ravel()
    sizes = np.bincount(flat, minlength=count + 1).astype(np.int64)

    grid = np.indices(ids.shape).reshape(3, -1).T
    positions = labels.voxel_to_world(grid)
    safe_sizes = np.where(sizes > 0, sizes, 1)
    centroids = np.stack(
        [np.bincount(flat, weights=positions[:, axis], minlength=count + 1) for axis in range(3)],
        axis=1,
    ) / safe_sizes[:, None]
    mean_feature = (
        np.bincount(flat, weights=np.asarray(feature.data, dtype=float).ravel(), minlength=count + 1)
        / safe_sizes
    )
    centroids[0] = np.nan
    mean_feature[0] = np.nan
    return SupervoxelLabeling(
        labels=labels.with_data(ids.astype(np.int32)),
        count=count,
        centroids_mm=centroids,
        mean_feature=mean_feature,
        sizes=sizes,
    )


def slic_supervoxels(feature, mask, target_sv_volume_mm3, compactness, max_iter=10):
    """
    Adaptive-SLIC supervoxels restricted to a mask.

    The number of supervoxels is the mask volume divided by the target supervoxel volume.
    Clustering runs on the wall detection response only (no intensity).

    Args:
        feature (Volume): Wall detection map.
        mask (Volume): Boolean segmentation mask on the same grid.
        target_sv_volume_mm3 (float): Desired supervoxel volume.
        compactness (float): Initial compactness; adapted per cluster by SLIC-zero.
        max_iter (int): Number of k-means iterations.

    Returns:
        SupervoxelLabeling: Labels partitioning the mask (0 outside).
    """
    if target_sv_volume_mm3 <= 0:
        raise ValueError("target_sv_volume_mm3 must be > 0")
    if not feature.same_grid(mask):
        raise ValueError("feature and mask grids differ")
    inside = np.asarray(mask.data, dtype=bool)
    n_voxels = int(inside.sum())
    if n_voxels == 0:
        raise ValueError("segmentation mask is empty")

    voxel_volume = feature.spacing_mm**3
    n_segments = int(round(n_voxels * voxel_volume / target_sv_volume_mm3))

    if n_segments <= 1:
        labels = inside.astype(np.int32)
    else:
        # skimage's Cython SLIC needs writable buffers; Volume data is read-only
        labels = slic(
            np.array(feature.data, dtype=float),
            n_segments=n_segments,
            compactness=compactness,
            max_num_iter=max_iter,
            slic_zero=True,
            enforce_connectivity=True,
            start_label=1,
            mask=inside.copy(),
            channel_axis=None,
        )
        labels = np.where(inside, labels, 0)
        labels = enforce_connectivity(labels)
        labels = relabel_sequential(labels)[0]

    labeling = labeling_from_labels(feature.with_data(labels.astype(np.int32)), feature)
    logger.debug(
        "supervoxels: requested=%d produced=%d mask_voxels=%d",
        max(n_segments, 1),
        labeling.count,
        n_voxels,
    )
    return labeling
