"""
Loading, saving, resampling and cropping of 3D scalar volumes.

Two on-disk formats are supported:
    - NIfTI-1 single file (.nii or .nii.gz) through nibabel
    - raw little-endian float32 stream (.raw) with a JSON sidecar (.json) holding
      {"dims": [nx, ny, nz], "spacing_mm": s, "origin_mm": [x, y, z]}

Arrays are indexed [x, y, z]; on disk the raw stream is x-fastest.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import nibabel as nib
import numpy as np
from scipy import ndimage

from errors import VolumeFormatError

logger = logging.getLogger(__name__)

SUPPORTED_NIFTI_DTYPES = (np.uint8, np.int16, np.int32, np.float32)


@dataclass(frozen=True)
class Volume:
    """A scalar grid with physical metadata.

    Masks (VoxelMask) are Volumes holding boolean data on the grid of their source.

    Attributes:
        data: Array indexed [x, y, z]; read-only.
        spacing_xyz: Voxel size per axis in mm (equal for isotropic volumes).
        origin_mm: Physical position of voxel (0, 0, 0).
    """

    data: np.ndarray
    spacing_xyz: tuple = (1.0, 1.0, 1.0)
    origin_mm: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        array = np.asarray(self.data)
        if array.ndim != 3:
            raise VolumeFormatError(f"volume data must be 3D, got shape {array.shape}")
        if min(array.shape) < 1:
            raise VolumeFormatError(f"volume dims must be >= 1, got {array.shape}")
        spacing = tuple(float(s) for s in np.broadcast_to(self.spacing_xyz, (3,)))
        if min(spacing) <= 0:
            raise VolumeFormatError(f"spacing must be positive, got {spacing}")
        origin = tuple(float(o) for o in np.broadcast_to(self.origin_mm, (3,)))
        view = array.view()
        view.flags.writeable = False
        object.__setattr__(self, "data", view)
        object.__setattr__(self, "spacing_xyz", spacing)
        object.__setattr__(self, "origin_mm", origin)

    @property
    def dims(self):
        return tuple(int(n) for n in self.data.shape)

    @property
    def is_isotropic(self):
        return np.allclose(self.spacing_xyz, self.spacing_xyz[0], rtol=1e-6, atol=0)

    @property
    def spacing_mm(self):
        """Isotropic spacing; anisotropic volumes must be resampled first."""
        if not self.is_isotropic:
            raise VolumeFormatError(
                f"volume spacing {self.spacing_xyz} is anisotropic; resample it first"
            )
        return self.spacing_xyz[0]

    def with_data(self, data):
        """New volume on the same grid."""
        data = np.asarray(data)
        if data.shape != self.data.shape:
            raise VolumeFormatError(
                f"data shape {data.shape} does not match grid {self.data.shape}"
            )
        return Volume(data, self.spacing_xyz, self.origin_mm)

    def same_grid(self, other):
        return (
            self.dims == other.dims
            and np.allclose(self.spacing_xyz, other.spacing_xyz)
            and np.allclose(self.origin_mm, other.origin_mm)
        )

    def voxel_to_world(self, ijk):
        ijk = np.asarray(ijk, dtype=float)
        return np.asarray(self.origin_mm) + ijk * np.asarray(self.spacing_xyz)

    def world_to_voxel(self, points_mm):
        points_mm = np.asarray(points_mm, dtype=float)
        return (points_mm - np.asarray(self.origin_mm)) / np.asarray(self.spacing_xyz)

    def voxel_index(self, point_mm):
        """Nearest voxel index of a physical point, or None when outside the grid."""
        ijk = np.rint(self.world_to_voxel(point_mm)).astype(int)
        if np.any(ijk < 0) or np.any(ijk >= np.asarray(self.dims)):
            return None
        return tuple(int(i) for i in ijk)


def load_nifti(path):
    """
    Load a NIfTI-1 file.

    Args:
        path (str | Path): Path to a .nii or .nii.gz file.

    Returns:
        Volume: Scaled data (scl_slope/scl_inter applied when set) with zooms and origin.
    """
    try:
        image = nib.load(str(path))
    except FileNotFoundError:
        raise VolumeFormatError(f"volume file '{path}' does not exist")
    except Exception as exc:
        raise VolumeFormatError(f"cannot read NIfTI file '{path}': {exc}")

    dtype = image.header.get_data_dtype()
    if not any(dtype == np.dtype(supported) for supported in SUPPORTED_NIFTI_DTYPES):
        raise VolumeFormatError(f"unsupported NIfTI datatype {dtype} in '{path}'")

    try:
        data = np.asanyarray(image.dataobj)
    except Exception as exc:
        raise VolumeFormatError(f"inconsistent NIfTI header in '{path}': {exc}")

    if data.ndim == 4 and data.shape[3] == 1:
        data = data[..., 0]
    if data.ndim != 3:
        raise VolumeFormatError(f"'{path}' is not a single-channel 3D volume: {data.shape}")

    spacing = tuple(float(z) for z in image.header.get_zooms()[:3])
    origin = tuple(float(o) for o in image.affine[:3, 3])
    return Volume(np.asarray(data), spacing, origin)


def _sidecar_path(path):
    path = Path(path)
    return path.with_suffix(".json") if path.suffix == ".raw" else path


def _raw_path(path):
    path = Path(path)
    return path.with_suffix(".raw") if path.suffix == ".json" else path


def load_raw(path):
    """
    Load a raw float32 stream described by its JSON sidecar.

    Args:
        path (str | Path): The .raw file or its .json sidecar.

    Returns:
        Volume: Float32 volume.
    """
    raw_path, sidecar_path = _raw_path(path), _sidecar_path(path)
    try:
        header = json.loads(sidecar_path.read_text(encoding="utf-8"))
        dims = tuple(int(n) for n in header["dims"])
        spacing = header["spacing_mm"]
        origin = tuple(header.get("origin_mm", (0.0, 0.0, 0.0)))
    except FileNotFoundError:
        raise VolumeFormatError(f"sidecar '{sidecar_path}' does not exist")
    except (KeyError, TypeError, ValueError) as exc:
        raise VolumeFormatError(f"malformed sidecar '{sidecar_path}': {exc}")

    if len(dims) != 3 or min(dims) < 1:
        raise VolumeFormatError(f"sidecar dims must be three positive ints, got {dims}")

    try:
        stream = np.fromfile(raw_path, dtype="<f4")
    except FileNotFoundError:
        raise VolumeFormatError(f"raw file '{raw_path}' does not exist")

    expected = int(np.prod(dims))
    if stream.size != expected:
        raise VolumeFormatError(
            f"raw file '{raw_path}' holds {stream.size} values, header expects {expected}"
        )
    data = stream.reshape(dims, order="F").astype(np.float32)
    return Volume(data, spacing, origin)


# Map file extensions to loader functions
loaders = {".nii": load_nifti, ".gz": load_nifti, ".raw": load_raw, ".json": load_raw}


def load_volume(path):
    """
    Load a volume, choosing the reader from the file extension.

    Args:
        path (str | Path): .nii, .nii.gz, .raw or the .json sidecar of a raw file.

    Returns:
        Volume: The loaded volume; anisotropic spacing is kept per axis.

    Raises:
        VolumeFormatError: For unknown extensions and unreadable files.
    """
    path = Path(path)
    try:
        loader = loaders[path.suffix.lower()]
    except KeyError:
        raise VolumeFormatError(f"unsupported volume file extension '{path.suffix}'")
    volume = loader(path)
    logger.debug("loaded %s dims=%s spacing=%s", path, volume.dims, volume.spacing_xyz)
    return volume


def _nifti_dtype(data):
    if data.dtype == np.bool_:
        return np.uint8
    if np.issubdtype(data.dtype, np.integer):
        return data.dtype if data.dtype in (np.uint8, np.int16) else np.int32
    return np.float32


def save_volume(volume, path):
    """
    Write a volume as NIfTI (.nii/.nii.gz) or raw+JSON (.raw).

    Booleans are written as uint8, integers as int32 (uint8/int16 kept), floats as float32.

    Args:
        volume (Volume): Volume to write.
        path (str | Path): Destination; the extension selects the format.

    Returns:
        Path: The written file (the .raw file for the raw format).
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".raw":
        volume.data.astype("<f4").ravel(order="F").tofile(path)
        sidecar = {
            "dims": list(volume.dims),
            "spacing_mm": volume.spacing_xyz[0] if volume.is_isotropic else list(volume.spacing_xyz),
            "origin_mm": list(volume.origin_mm),
        }
        _sidecar_path(path).write_text(json.dumps(sidecar, indent=2), encoding="utf-8")
        return path

    if not (path.name.endswith(".nii") or path.name.endswith(".nii.gz")):
        raise VolumeFormatError(f"unsupported volume file extension for '{path}'")
    data = np.asarray(volume.data).astype(_nifti_dtype(volume.data))
    affine = np.diag([*volume.spacing_xyz, 1.0])
    affine[:3, 3] = volume.origin_mm
    image = nib.Nifti1Image(data, affine)
    image.header.set_zooms(volume.spacing_xyz)
    nib.save(image, str(path))
    return path


def resample_isotropic(volume, target_mm):
    """
    Trilinear resampling to isotropic voxels.

    Output dims are round(physical extent / target_mm) per axis. Voxel centres are aligned
    so that the physical extent is preserved; values never leave the input [min, max].

    Args:
        volume (Volume): Input volume, isotropic or not.
        target_mm (float): Output voxel size.

    Returns:
        Volume: Resampled float volume.
    """
    if target_mm <= 0:
        raise ValueError("target_mm must be > 0")

    spacing = np.asarray(volume.spacing_xyz)
    if np.allclose(spacing, target_mm):
        return Volume(np.asarray(volume.data).astype(float), (target_mm,) * 3, volume.origin_mm)

    dims = np.asarray(volume.dims)
    out_dims = np.maximum(np.rint(dims * spacing / target_mm).astype(int), 1)
    axes = [
        ((np.arange(n_out) + 0.5) * target_mm) / s - 0.5 for n_out, s in zip(out_dims, spacing)
    ]
    coords = np.meshgrid(*axes, indexing="ij")
    data = ndimage.map_coordinates(
        np.asarray(volume.data, dtype=float), coords, order=1, mode="nearest"
    )
    origin = np.asarray(volume.origin_mm) + 0.5 * (target_mm - spacing)
    return Volume(data, (target_mm,) * 3, tuple(origin))


def resample_mask(mask, target_mm):
    """Resample a binary mask: trilinear interpolation followed by a 0.5 threshold."""
    resampled = resample_isotropic(mask.with_data(np.asarray(mask.data, dtype=float)), target_mm)
    return resampled.with_data(np.asarray(resampled.data) >= 0.5)


def crop_volume(volume, x_mm=None, y_mm=None, z_mm=None):
    """
    Crop a volume to physical ranges (inclusive, in mm); None keeps the full axis.

    Args:
        volume (Volume): Volume to crop.
        x_mm, y_mm, z_mm (tuple[float, float] | None): Physical ranges.

    Returns:
        Volume: Cropped volume with an updated origin.
    """
    slices = []
    for axis, bounds in enumerate((x_mm, y_mm, z_mm)):
        n = volume.dims[axis]
        if bounds is None:
            slices.append(slice(0, n))
            continue
        lo, hi = sorted(bounds)
        origin, step = volume.origin_mm[axis], volume.spacing_xyz[axis]
        start = max(int(np.ceil((lo - origin) / step - 1e-9)), 0)
        stop = min(int(np.floor((hi - origin) / step + 1e-9)) + 1, n)
        if stop <= start:
            raise ValueError(f"crop range {bounds} on axis {axis} leaves no voxels")
        slices.append(slice(start, stop))

    origin = volume.voxel_to_world([s.start for s in slices])
    return Volume(np.asarray(volume.data)[tuple(slices)], volume.spacing_xyz, tuple(origin))
