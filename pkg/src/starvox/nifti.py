"""Minimal single-file NIfTI-1 reader/writer plus a raw-bytes fallback.

Covers exactly what the dataset harness needs: little-endian 3D/4D volumes of
float32, uint16, int32, or uint8 with per-axis spacing, optional gzip. The
on-disk sample order follows the NIfTI standard (x fastest), so files load in
standard biomedical viewers; in memory volumes remain C-ordered [x, y, z].

The raw format writes C-order bytes (z fastest, matching the in-memory
layout) alongside a JSON sidecar describing dims, dtype, and spacing.
"""

from __future__ import annotations

import gzip
import json
import struct
from pathlib import Path

import numpy as np

_DTYPE_CODES = {
    np.dtype(np.uint8): (2, 8),
    np.dtype(np.int16): (4, 16),
    np.dtype(np.int32): (8, 32),
    np.dtype(np.float32): (16, 32),
    np.dtype(np.float64): (64, 64),
    np.dtype(np.uint16): (512, 16),
}
_CODE_DTYPES = {code: dt for dt, (code, _) in _DTYPE_CODES.items()}

_HEADER_SIZE = 348
_VOX_OFFSET = 352.0


def _build_header(data: np.ndarray, spacing) -> bytes:
    ndim = data.ndim
    if ndim not in (3, 4):
        raise ValueError(f"expected 3D or 4D data, got {ndim}D")
    code, bitpix = _DTYPE_CODES[np.dtype(data.dtype)]
    dim = [ndim, *data.shape] + [1] * (7 - ndim)
    pixdim = [1.0, float(spacing[0]), float(spacing[1]), float(spacing[2])] + [1.0] * 4

    h = bytearray(_HEADER_SIZE)
    struct.pack_into("<i", h, 0, _HEADER_SIZE)                      # sizeof_hdr
    struct.pack_into("<8h", h, 40, *dim)                            # dim
    struct.pack_into("<h", h, 70, code)                             # datatype
    struct.pack_into("<h", h, 72, bitpix)                           # bitpix
    struct.pack_into("<8f", h, 76, *pixdim)                         # pixdim
    struct.pack_into("<f", h, 108, _VOX_OFFSET)                     # vox_offset
    struct.pack_into("<f", h, 112, 1.0)                             # scl_slope
    struct.pack_into("<f", h, 116, 0.0)                             # scl_inter
    struct.pack_into("<b", h, 123, 2)                               # xyzt_units: mm
    struct.pack_into("<h", h, 252, 0)                               # qform_code
    struct.pack_into("<h", h, 254, 1)                               # sform_code
    struct.pack_into("<4f", h, 280, float(spacing[0]), 0.0, 0.0, 0.0)  # srow_x
    struct.pack_into("<4f", h, 296, 0.0, float(spacing[1]), 0.0, 0.0)  # srow_y
    struct.pack_into("<4f", h, 312, 0.0, 0.0, float(spacing[2]), 0.0)  # srow_z
    h[344:348] = b"n+1\x00"                                         # magic
    return bytes(h) + b"\x00\x00\x00\x00"                           # no extensions


def write_nifti(path, data: np.ndarray, spacing=(1.0, 1.0, 1.0)) -> None:
    """Write a 3D or 4D little-endian NIfTI-1 file; gzip iff path ends .gz.

    Gzip output uses mtime=0 so identical volumes produce identical bytes.
    """
    path = Path(path)
    data = np.asarray(data)
    payload = _build_header(data, spacing) + data.tobytes(order="F")
    if path.suffix == ".gz":
        # filename="" and mtime=0 keep the gzip header content-only, so equal
        # volumes give byte-identical files wherever they are written
        with open(path, "wb") as fh:
            with gzip.GzipFile(filename="", fileobj=fh, mode="wb", mtime=0) as gz:
                gz.write(payload)
    else:
        path.write_bytes(payload)


def read_nifti(path) -> tuple[np.ndarray, tuple[float, float, float]]:
    """Read a NIfTI-1 file written by this module (or compatible)."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    if len(raw) < _HEADER_SIZE:
        raise ValueError(f"{path}: truncated NIfTI header")
    (sizeof_hdr,) = struct.unpack_from("<i", raw, 0)
    if sizeof_hdr != _HEADER_SIZE:
        raise ValueError(f"{path}: not a little-endian NIfTI-1 file")
    magic = raw[344:348]
    if magic not in (b"n+1\x00", b"ni1\x00"):
        raise ValueError(f"{path}: bad NIfTI magic {magic!r}")
    dim = struct.unpack_from("<8h", raw, 40)
    ndim = dim[0]
    if ndim not in (3, 4):
        raise ValueError(f"{path}: unsupported dimensionality {ndim}")
    shape = tuple(dim[1 : 1 + ndim])
    (code,) = struct.unpack_from("<h", raw, 70)
    if code not in _CODE_DTYPES:
        raise ValueError(f"{path}: unsupported NIfTI datatype code {code}")
    dtype = _CODE_DTYPES[code]
    pixdim = struct.unpack_from("<8f", raw, 76)
    spacing = tuple(float(p) if p > 0 else 1.0 for p in pixdim[1:4])
    (vox_offset,) = struct.unpack_from("<f", raw, 108)
    offset = int(vox_offset) if vox_offset >= _HEADER_SIZE else _HEADER_SIZE

    count = int(np.prod(shape))
    data = np.frombuffer(raw, dtype=dtype.newbyteorder("<"), count=count, offset=offset)
    data = data.reshape(shape, order="F")
    return np.ascontiguousarray(data.astype(dtype)), spacing


def write_raw(path, data: np.ndarray, spacing=(1.0, 1.0, 1.0)) -> None:
    """Write C-order bytes plus a JSON sidecar (same stem, .json suffix)."""
    path = Path(path)
    data = np.asarray(data)
    path.write_bytes(data.tobytes(order="C"))
    sidecar = {
        "dims": list(data.shape),
        "dtype": str(np.dtype(data.dtype)),
        "spacing": [float(s) for s in spacing],
        "order": "C",
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2) + "\n")


def read_raw(path) -> tuple[np.ndarray, tuple[float, float, float]]:
    path = Path(path)
    sidecar = json.loads(path.with_suffix(".json").read_text())
    data = np.frombuffer(path.read_bytes(), dtype=np.dtype(sidecar["dtype"]))
    data = data.reshape(sidecar["dims"], order=sidecar.get("order", "C"))
    return np.ascontiguousarray(data), tuple(sidecar["spacing"])


def write_volume(path, data: np.ndarray, spacing=(1.0, 1.0, 1.0)) -> None:
    """Dispatch on extension: .nii / .nii.gz / .raw."""
    name = str(path)
    if name.endswith((".nii", ".nii.gz")):
        write_nifti(path, data, spacing)
    elif name.endswith(".raw"):
        write_raw(path, data, spacing)
    else:
        raise ValueError(f"unsupported volume extension: {name}")


def read_volume(path) -> tuple[np.ndarray, tuple[float, float, float]]:
    name = str(path)
    if name.endswith((".nii", ".nii.gz")):
        return read_nifti(path)
    if name.endswith(".raw"):
        return read_raw(path)
    raise ValueError(f"unsupported volume extension: {name}")
