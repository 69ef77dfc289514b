"""Minimal NIfTI-1 single-file (.nii / .nii.gz) reader and writer.

Covers the subset of the format this package produces and consumes:
3D volumes, scalar dtypes, sform/qform affines, scl slope/intercept on
read. Written files always carry an sform affine, vox_offset 352, and a
deterministic byte layout (gzip mtime pinned to 0) so identical inputs
produce identical files.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import GliosegError

HEADER_SIZE = 348
VOX_OFFSET = 352
MAGIC = b"n+1\x00"

# NIfTI-1 datatype code <-> numpy dtype
_DTYPE_CODES = {
    2: np.uint8,
    4: np.int16,
    8: np.int32,
    16: np.float32,
    64: np.float64,
    256: np.int8,
    512: np.uint16,
    768: np.uint32,
    1024: np.int64,
}
_CODE_FOR_DTYPE = {np.dtype(v): k for k, v in _DTYPE_CODES.items()}


@dataclass
class NiftiImage:
    """Voxel data plus the voxel-to-world affine from the header."""

    data: np.ndarray
    affine: np.ndarray

    @property
    def spacing(self) -> tuple[float, float, float]:
        return spacing_from_affine(self.affine)


def spacing_from_affine(affine: np.ndarray) -> tuple[float, float, float]:
    """Voxel edge lengths in mm: column norms of the rotation block."""
    norms = np.sqrt((affine[:3, :3] ** 2).sum(axis=0))
    return tuple(float(n) for n in norms)


def axial_axis_from_affine(affine: np.ndarray) -> int:
    """Index of the voxel axis most aligned with the scanner z direction."""
    return int(np.argmax(np.abs(affine[2, :3])))


def _open(path: Path, mode: str):
    if path.name.endswith(".gz"):
        if "w" in mode:
            # mtime=0 and a blank name keep written .nii.gz byte-reproducible
            return gzip.GzipFile("", mode=mode, fileobj=open(path, mode), mtime=0)
        return gzip.open(path, mode)
    return open(path, mode)


def _quaternion_affine(hdr: dict) -> np.ndarray:
    b, c, d = hdr["quatern_b"], hdr["quatern_c"], hdr["quatern_d"]
    a = np.sqrt(max(0.0, 1.0 - (b * b + c * c + d * d)))
    rot = np.array(
        [
            [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
            [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
            [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c],
        ]
    )
    qfac = hdr["pixdim"][0]
    if qfac == 0:
        qfac = 1.0
    zooms = np.array([hdr["pixdim"][1], hdr["pixdim"][2], hdr["pixdim"][3] * qfac])
    affine = np.eye(4)
    affine[:3, :3] = rot * zooms
    affine[:3, 3] = [hdr["qoffset_x"], hdr["qoffset_y"], hdr["qoffset_z"]]
    return affine


def read_nifti(path: str | Path) -> NiftiImage:
    """Read a 3D NIfTI-1 volume; applies scl_slope/scl_inter when set."""
    path = Path(path)
    with _open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER_SIZE:
        raise GliosegError(f"{path}: truncated NIfTI header")

    sizeof_hdr = struct.unpack_from("<i", raw, 0)[0]
    endian = "<"
    if sizeof_hdr != HEADER_SIZE:
        endian = ">"
        if struct.unpack_from(">i", raw, 0)[0] != HEADER_SIZE:
            raise GliosegError(f"{path}: not a NIfTI-1 file")

    dim = struct.unpack_from(endian + "8h", raw, 40)
    datatype = struct.unpack_from(endian + "h", raw, 70)[0]
    pixdim = struct.unpack_from(endian + "8f", raw, 76)
    vox_offset = int(struct.unpack_from(endian + "f", raw, 108)[0])
    scl_slope, scl_inter = struct.unpack_from(endian + "2f", raw, 112)
    qform_code, sform_code = struct.unpack_from(endian + "2h", raw, 252)
    quatern = struct.unpack_from(endian + "3f", raw, 256)
    qoffset = struct.unpack_from(endian + "3f", raw, 268)
    srow = np.array(struct.unpack_from(endian + "12f", raw, 280)).reshape(3, 4)
    magic = raw[344:348]
    if magic not in (b"n+1\x00", b"ni1\x00"):
        raise GliosegError(f"{path}: unsupported magic {magic!r}")

    ndim = dim[0]
    if not 1 <= ndim <= 7:
        raise GliosegError(f"{path}: bad dim[0]={ndim}")
    shape = tuple(dim[1 : 1 + ndim])
    if any(s > 1 for s in shape[3:]):
        raise GliosegError(f"{path}: only 3D volumes are supported, got shape {shape}")
    shape = (shape + (1, 1, 1))[:3]

    if datatype not in _DTYPE_CODES:
        raise GliosegError(f"{path}: unsupported datatype code {datatype}")
    dtype = np.dtype(_DTYPE_CODES[datatype]).newbyteorder(endian)

    count = int(np.prod(shape))
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=vox_offset)
    data = data.reshape(shape, order="F")
    data = np.asarray(data, dtype=data.dtype.newbyteorder("="))

    if scl_slope not in (0.0, 1.0) or scl_inter != 0.0:
        slope = scl_slope if scl_slope != 0.0 else 1.0
        data = data.astype(np.float32) * slope + scl_inter

    if sform_code > 0:
        affine = np.eye(4)
        affine[:3, :] = srow
    elif qform_code > 0:
        affine = _quaternion_affine(
            {
                "quatern_b": quatern[0],
                "quatern_c": quatern[1],
                "quatern_d": quatern[2],
                "qoffset_x": qoffset[0],
                "qoffset_y": qoffset[1],
                "qoffset_z": qoffset[2],
                "pixdim": pixdim,
            }
        )
    else:
        affine = np.diag([pixdim[1] or 1.0, pixdim[2] or 1.0, pixdim[3] or 1.0, 1.0])

    return NiftiImage(data=data, affine=affine)


def write_nifti(path: str | Path, data: np.ndarray, affine: np.ndarray) -> None:
    """Write a 3D (or 4D multi-channel) array with an sform affine."""
    path = Path(path)
    data = np.asarray(data)
    if data.ndim not in (3, 4):
        raise GliosegError(f"can only write 3D/4D volumes, got shape {data.shape}")
    dtype = data.dtype.newbyteorder("=")
    if dtype not in _CODE_FOR_DTYPE:
        raise GliosegError(f"unsupported dtype for NIfTI output: {dtype}")
    affine = np.asarray(affine, dtype=np.float64)

    dims = (data.shape + (1, 1, 1, 1))[:4]
    hdr = bytearray(VOX_OFFSET)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    struct.pack_into("<8h", hdr, 40, data.ndim, *dims, 1, 1, 1)
    struct.pack_into("<2h", hdr, 70, _CODE_FOR_DTYPE[dtype], dtype.itemsize * 8)
    spacing = spacing_from_affine(affine)
    struct.pack_into("<8f", hdr, 76, 1.0, *spacing, 1.0, 1.0, 1.0, 1.0)
    struct.pack_into("<f", hdr, 108, float(VOX_OFFSET))
    struct.pack_into("<2f", hdr, 112, 1.0, 0.0)  # scl_slope, scl_inter
    struct.pack_into("<2h", hdr, 252, 0, 1)  # qform_code=0, sform_code=1
    struct.pack_into("<12f", hdr, 280, *affine[:3, :].ravel())
    hdr[344:348] = MAGIC

    with _open(path, "wb") as fh:
        fh.write(bytes(hdr))
        fh.write(np.asarray(data, dtype=dtype).tobytes(order="F"))
