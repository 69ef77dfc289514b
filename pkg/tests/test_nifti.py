import gzip

import numpy as np
import pytest

from glioseg.errors import GliosegError
from glioseg.nifti import axial_axis_from_affine, read_nifti, spacing_from_affine, write_nifti


@pytest.mark.parametrize("suffix", [".nii", ".nii.gz"])
@pytest.mark.parametrize("dtype", [np.float32, np.uint8, np.int16])
def test_roundtrip(tmp_path, suffix, dtype):
    rng = np.random.default_rng(0)
    data = (rng.random((7, 5, 9)) * 100).astype(dtype)
    affine = np.diag([1.0, 1.5, 2.0, 1.0])
    affine[:3, 3] = [-10, 4, 7]
    path = tmp_path / f"vol{suffix}"
    write_nifti(path, data, affine)
    img = read_nifti(path)
    assert img.data.dtype == dtype
    np.testing.assert_array_equal(img.data, data)
    np.testing.assert_allclose(img.affine, affine, atol=1e-5)


def test_spacing_and_axial_axis():
    affine = np.diag([2.0, 3.0, 4.0, 1.0])
    assert spacing_from_affine(affine) == (2.0, 3.0, 4.0)
    assert axial_axis_from_affine(affine) == 2
    # rotate so voxel axis 0 points along scanner z
    rot = np.eye(4)
    rot[:3, :3] = np.array([[0, 0, 1.0], [1.0, 0, 0], [0, 1.0, 0]]).T
    assert axial_axis_from_affine(rot) == 0


def test_gzip_writes_are_deterministic(tmp_path):
    data = np.arange(60, dtype=np.float32).reshape(3, 4, 5)
    a = tmp_path / "a.nii.gz"
    b = tmp_path / "b.nii.gz"
    write_nifti(a, data, np.eye(4))
    write_nifti(b, data, np.eye(4))
    assert a.read_bytes() == b.read_bytes()


def test_scl_slope_applied(tmp_path):
    # hand-patch the slope/intercept fields of a written file
    path = tmp_path / "scaled.nii"
    write_nifti(path, np.ones((2, 2, 2), dtype=np.int16), np.eye(4))
    raw = bytearray(path.read_bytes())
    import struct

    struct.pack_into("<2f", raw, 112, 2.0, 5.0)
    path.write_bytes(bytes(raw))
    img = read_nifti(path)
    np.testing.assert_allclose(img.data, 7.0)


def test_4d_write(tmp_path):
    data = np.zeros((2, 3, 4, 3), dtype=np.float32)
    path = tmp_path / "probs.nii.gz"
    write_nifti(path, data, np.eye(4))
    with gzip.open(path, "rb") as fh:
        raw = fh.read()
    import struct

    assert struct.unpack_from("<8h", raw, 40)[:5] == (4, 2, 3, 4, 3)


def test_rejects_garbage(tmp_path):
    path = tmp_path / "bad.nii"
    path.write_bytes(b"\x00" * 400)
    with pytest.raises(GliosegError):
        read_nifti(path)
