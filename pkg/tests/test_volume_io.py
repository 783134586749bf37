# type: ignore

"""
Unit tests for volume_io.py

Tests the Volume container, NIfTI and raw+JSON reading and writing,
isotropic resampling and physical cropping.
"""

import json
import pytest
import sys
import os

import nibabel as nib
import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from errors import VolumeFormatError
from volume_io import (
    Volume,
    crop_volume,
    load_volume,
    resample_isotropic,
    resample_mask,
    save_volume,
)


class TestVolume:
    """Test suite for the Volume container"""

    def test_rejects_2d_data(self):
        """Test that non-3D arrays raise VolumeFormatError"""
        with pytest.raises(VolumeFormatError):
            Volume(np.zeros((4, 4)))

    def test_rejects_non_positive_spacing(self):
        """Test that zero spacing raises VolumeFormatError"""
        with pytest.raises(VolumeFormatError):
            Volume(np.zeros((2, 2, 2)), (1.0, 0.0, 1.0))

    def test_data_is_read_only(self):
        """Test that volume data cannot be modified in place"""
        volume = Volume(np.zeros((2, 2, 2)))
        with pytest.raises(ValueError):
            volume.data[0, 0, 0] = 1.0

    def test_world_voxel_round_trip(self):
        """Test that voxel_to_world and world_to_voxel are inverse"""
        volume = Volume(np.zeros((5, 5, 5)), (2.0, 2.0, 2.0), (10.0, -4.0, 0.5))
        ijk = np.array([[1, 2, 3], [4, 0, 2]])
        np.testing.assert_allclose(volume.world_to_voxel(volume.voxel_to_world(ijk)), ijk)

    def test_voxel_index_outside_is_none(self):
        """Test that points outside the grid have no voxel index"""
        volume = Volume(np.zeros((5, 5, 5)), (2.0, 2.0, 2.0))
        assert volume.voxel_index([4.0, 4.0, 4.0]) == (2, 2, 2)
        assert volume.voxel_index([-3.0, 0.0, 0.0]) is None

    def test_anisotropic_spacing_mm_raises(self):
        """Test that spacing_mm demands an isotropic grid"""
        volume = Volume(np.zeros((2, 2, 2)), (1.0, 1.0, 2.5))
        assert not volume.is_isotropic
        with pytest.raises(VolumeFormatError):
            volume.spacing_mm


class TestNifti:
    """Test suite for NIfTI reading and writing"""

    def test_float_round_trip(self, tmp_path):
        """Test that data, spacing and origin survive save and load"""
        data = np.random.default_rng(0).normal(size=(6, 5, 4)).astype(np.float32)
        volume = Volume(data, (1.5, 1.5, 2.0), (3.0, -2.0, 10.0))
        loaded = load_volume(save_volume(volume, tmp_path / "v.nii"))
        np.testing.assert_allclose(loaded.data, data)
        assert loaded.spacing_xyz == pytest.approx((1.5, 1.5, 2.0))
        assert loaded.origin_mm == pytest.approx((3.0, -2.0, 10.0))

    def test_compressed_extension(self, tmp_path):
        """Test that .nii.gz files are written and read"""
        volume = Volume(np.arange(24, dtype=np.int16).reshape(2, 3, 4))
        loaded = load_volume(save_volume(volume, tmp_path / "v.nii.gz"))
        np.testing.assert_array_equal(loaded.data, volume.data)

    def test_boolean_mask_written_as_uint8(self, tmp_path):
        """Test that masks are stored as uint8"""
        mask = Volume(np.eye(3, dtype=bool)[:, :, None].repeat(2, axis=2))
        path = save_volume(mask, tmp_path / "mask.nii")
        assert nib.load(str(path)).get_data_dtype() == np.uint8
        np.testing.assert_array_equal(load_volume(path).data > 0, mask.data)

    def test_scaling_applied(self, tmp_path):
        """Test that scl_slope and scl_inter are applied on load"""
        raw = np.arange(8, dtype=np.int16).reshape(2, 2, 2)
        image = nib.Nifti1Image(raw, np.eye(4))
        image.header.set_slope_inter(2.0, 1.0)
        path = tmp_path / "scaled.nii"
        nib.save(image, str(path))
        np.testing.assert_allclose(load_volume(path).data, raw * 2.0 + 1.0)

    def test_unsupported_datatype(self, tmp_path):
        """Test that float64 NIfTI files are rejected"""
        path = tmp_path / "f64.nii"
        nib.save(nib.Nifti1Image(np.zeros((2, 2, 2), dtype=np.float64), np.eye(4)), str(path))
        with pytest.raises(VolumeFormatError, match="datatype"):
            load_volume(path)

    def test_single_frame_4d_squeezed(self, tmp_path):
        """Test that a 4D volume with one frame loads as 3D"""
        path = tmp_path / "frame.nii"
        nib.save(nib.Nifti1Image(np.ones((3, 3, 3, 1), dtype=np.float32), np.eye(4)), str(path))
        assert load_volume(path).dims == (3, 3, 3)

    def test_missing_file(self, tmp_path):
        """Test that a missing file raises VolumeFormatError"""
        with pytest.raises(VolumeFormatError):
            load_volume(tmp_path / "missing.nii")


class TestRaw:
    """Test suite for raw float32 volumes with JSON sidecars"""

    def test_round_trip_through_sidecar(self, tmp_path):
        """Test that a raw volume can be loaded from either file of the pair"""
        data = np.arange(60, dtype=np.float32).reshape(3, 4, 5)
        volume = Volume(data, (2.0, 2.0, 2.0), (1.0, 2.0, 3.0))
        raw_path = save_volume(volume, tmp_path / "v.raw")
        for path in (raw_path, tmp_path / "v.json"):
            loaded = load_volume(path)
            np.testing.assert_array_equal(loaded.data, data)
            assert loaded.origin_mm == (1.0, 2.0, 3.0)

    def test_x_fastest_layout(self, tmp_path):
        """Test that the raw stream is written with x varying fastest"""
        data = np.arange(24, dtype=np.float32).reshape(2, 3, 4)
        save_volume(Volume(data), tmp_path / "v.raw")
        stream = np.fromfile(tmp_path / "v.raw", dtype="<f4")
        assert stream[0] == data[0, 0, 0]
        assert stream[1] == data[1, 0, 0]

    def test_size_mismatch(self, tmp_path):
        """Test that a stream not matching the header dims is rejected"""
        np.zeros(10, dtype="<f4").tofile(tmp_path / "bad.raw")
        (tmp_path / "bad.json").write_text(json.dumps({"dims": [2, 2, 2], "spacing_mm": 1.0}))
        with pytest.raises(VolumeFormatError, match="header expects"):
            load_volume(tmp_path / "bad.raw")

    def test_unknown_extension(self, tmp_path):
        """Test that unknown extensions raise VolumeFormatError"""
        with pytest.raises(VolumeFormatError):
            load_volume(tmp_path / "volume.mha")


class TestResample:
    """Test suite for resampling and cropping"""

    def test_anisotropic_to_isotropic_dims(self):
        """Test that output dims preserve the physical extent"""
        volume = Volume(np.zeros((10, 10, 5)), (1.0, 1.0, 2.0))
        resampled = resample_isotropic(volume, 1.0)
        assert resampled.dims == (10, 10, 10)
        assert resampled.is_isotropic

    def test_values_stay_in_input_range(self):
        """Test that trilinear resampling does not overshoot"""
        data = np.random.default_rng(1).uniform(-5, 7, size=(8, 8, 4))
        resampled = resample_isotropic(Volume(data, (1.0, 1.0, 2.5)), 0.7)
        assert resampled.data.min() >= data.min() - 1e-9
        assert resampled.data.max() <= data.max() + 1e-9

    def test_constant_volume_stays_constant(self):
        """Test that a constant volume resamples to the same constant"""
        resampled = resample_isotropic(Volume(np.full((4, 4, 4), 3.0), (2.0, 2.0, 2.0)), 1.0)
        np.testing.assert_allclose(resampled.data, 3.0)

    def test_linear_ramp_preserved(self):
        """Test that halving the resolution keeps a linear ramp exact"""
        i, j, k = np.indices((12, 10, 8)).astype(float)
        volume = Volume(0.5 * i - 2.0 * j + 3.0 * k + 7.0, (1.0, 1.0, 1.0), (4.0, -2.0, 10.0))
        resampled = resample_isotropic(volume, 2.0)
        assert resampled.dims == (6, 5, 4)
        positions = resampled.voxel_to_world(np.indices(resampled.dims).reshape(3, -1).T)
        x, y, z = (positions - np.asarray(volume.origin_mm)).T
        expected = (0.5 * x - 2.0 * y + 3.0 * z + 7.0).reshape(resampled.dims)
        np.testing.assert_allclose(resampled.data, expected, atol=1e-6)

    def test_same_spacing_returns_copy(self):
        """Test that resampling to the current spacing keeps the values"""
        data = np.random.default_rng(2).normal(size=(4, 4, 4))
        resampled = resample_isotropic(Volume(data, (2.0, 2.0, 2.0)), 2.0)
        np.testing.assert_array_equal(resampled.data, data)

    def test_resample_mask_is_boolean(self):
        """Test that resampled masks stay binary"""
        mask = Volume(np.ones((4, 4, 2), dtype=bool), (1.0, 1.0, 2.0))
        resampled = resample_mask(mask, 1.0)
        assert resampled.data.dtype == bool
        assert resampled.data.all()

    def test_crop_z_updates_origin(self):
        """Test that a physical z crop keeps inclusive bounds and moves the origin"""
        volume = Volume(np.zeros((2, 2, 10)), (2.0, 2.0, 2.0), (0.0, 0.0, 100.0))
        cropped = crop_volume(volume, z_mm=(104.0, 110.0))
        assert cropped.dims == (2, 2, 4)
        assert cropped.origin_mm == (0.0, 0.0, 104.0)

    def test_crop_outside_raises(self):
        """Test that a crop range without voxels is rejected"""
        volume = Volume(np.zeros((2, 2, 4)))
        with pytest.raises(ValueError):
            crop_volume(volume, z_mm=(10.0, 20.0))
