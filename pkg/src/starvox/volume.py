"""Dense 3D volumes and the shared numerical kernels everything else builds on.

Conventions, fixed here and relied on by every other module including the
file writers:

* Volumes are C-contiguous numpy arrays indexed ``vol[x, y, z]``; flattening
  gives row-major order with z varying fastest.
* Voxel centers sit at integer coordinates, so an axis with ``n`` voxels spans
  the physical extent ``[-0.5, n - 0.5]``. Resampling maps source extent to
  target extent corner to corner.
* Anything outside the volume counts as background for distance transforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from numba import njit
from scipy import ndimage


class PadMode(Enum):
    """Out-of-bounds policy for spatial sampling."""

    ZERO = "zero"
    REFLECT = "reflect"


@dataclass
class Volume3:
    """A scalar 3D volume with per-axis physical voxel spacing."""

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise ValueError(f"Volume3 expects a 3D array, got shape {self.data.shape}")
        if min(self.data.shape) < 1:
            raise ValueError(f"Volume3 dims must each be >= 1, got {self.data.shape}")
        self.spacing = tuple(float(s) for s in self.spacing)
        if len(self.spacing) != 3 or any(s <= 0 for s in self.spacing):
            raise ValueError(f"spacing must be 3 positive floats, got {self.spacing}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass
class LabelVolume:
    """An integer instance map: 0 is background, 1..n are instances."""

    labels: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        if self.labels.ndim != 3:
            raise ValueError(f"LabelVolume expects a 3D array, got shape {self.labels.shape}")
        if not np.issubdtype(self.labels.dtype, np.integer):
            raise ValueError(f"labels must be integer-typed, got {self.labels.dtype}")
        if self.labels.size and self.labels.min() < 0:
            raise ValueError("labels must be non-negative")
        self.spacing = tuple(float(s) for s in self.spacing)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.labels.shape

    @property
    def n_instances(self) -> int:
        return int(np.count_nonzero(np.unique(self.labels)))


def _check_coords(coords: np.ndarray) -> np.ndarray:
    coords = np.asarray(coords, dtype=np.float64)
    if coords.shape[-1] != 3:
        raise ValueError(f"coordinates must have a trailing axis of size 3, got {coords.shape}")
    if not np.all(np.isfinite(coords)):
        raise ValueError("coordinates must be finite")
    return coords


@njit(cache=True)
def _fold(i, n):  # pragma: no cover
    # symmetric reflection about the physical boundary; edge voxel repeats
    if n == 1:
        return 0
    m = i % (2 * n)
    if m >= n:
        m = 2 * n - 1 - m
    return m


@njit(cache=True)
def _trilinear_kernel(vol, coords, reflect, out):  # pragma: no cover
    nx, ny, nz = vol.shape
    for i in range(coords.shape[0]):
        x, y, z = coords[i, 0], coords[i, 1], coords[i, 2]
        x0 = math.floor(x)
        y0 = math.floor(y)
        z0 = math.floor(z)
        fx = x - x0
        fy = y - y0
        fz = z - z0
        ix0 = int(x0)
        iy0 = int(y0)
        iz0 = int(z0)
        acc = 0.0
        for c in range(8):
            ox = (c >> 2) & 1
            oy = (c >> 1) & 1
            oz = c & 1
            w = (fx if ox else 1.0 - fx) * (fy if oy else 1.0 - fy) * (fz if oz else 1.0 - fz)
            ix = ix0 + ox
            iy = iy0 + oy
            iz = iz0 + oz
            if reflect:
                acc += w * vol[_fold(ix, nx), _fold(iy, ny), _fold(iz, nz)]
            elif 0 <= ix < nx and 0 <= iy < ny and 0 <= iz < nz:
                acc += w * vol[ix, iy, iz]
        out[i] = acc


@njit(cache=True)
def _nearest_kernel(labels, coords, reflect, out):  # pragma: no cover
    nx, ny, nz = labels.shape
    for i in range(coords.shape[0]):
        # ceil(c - 0.5) rounds to nearest with the .5 tie toward the lower voxel
        ix = int(math.ceil(coords[i, 0] - 0.5))
        iy = int(math.ceil(coords[i, 1] - 0.5))
        iz = int(math.ceil(coords[i, 2] - 0.5))
        if reflect:
            out[i] = labels[_fold(ix, nx), _fold(iy, ny), _fold(iz, nz)]
        elif 0 <= ix < nx and 0 <= iy < ny and 0 <= iz < nz:
            out[i] = labels[ix, iy, iz]
        else:
            out[i] = 0


def trilinear_sample(vol: np.ndarray, coords, pad: PadMode = PadMode.ZERO) -> np.ndarray:
    """Trilinearly interpolate ``vol`` at continuous voxel coordinates.

    ``coords`` has shape (..., 3); returns an array of shape ``coords.shape[:-1]``
    (a 0-d array for a single point). Out-of-bounds reads resolve via ``pad``:
    ZERO contributes 0, REFLECT mirrors about the volume boundary.
    """
    coords = _check_coords(coords)
    out_shape = coords.shape[:-1]
    flat = np.ascontiguousarray(coords.reshape(-1, 3))
    out = np.empty(flat.shape[0], dtype=np.float64)
    src = vol if np.issubdtype(vol.dtype, np.floating) else vol.astype(np.float64)
    _trilinear_kernel(np.ascontiguousarray(src), flat, pad is PadMode.REFLECT, out)
    if np.issubdtype(vol.dtype, np.floating):
        out = out.astype(vol.dtype)
    return out.reshape(out_shape)


def nearest_sample(labels: np.ndarray, coords, pad: PadMode = PadMode.ZERO) -> np.ndarray:
    """Sample ``labels`` at continuous coordinates by nearest voxel.

    Ties at exactly .5 break toward the lower index (floor). ZERO padding
    returns 0 outside the volume; REFLECT mirrors.
    """
    coords = _check_coords(coords)
    out_shape = coords.shape[:-1]
    flat = np.ascontiguousarray(coords.reshape(-1, 3))
    out = np.empty(flat.shape[0], dtype=labels.dtype)
    _nearest_kernel(np.ascontiguousarray(labels), flat, pad is PadMode.REFLECT, out)
    return out.reshape(out_shape)


def _target_coords(source_dims, target_dims) -> np.ndarray:
    """Continuous source coordinates of target voxel centers under
    corner-to-corner extent mapping ([-0.5, n-0.5] onto [-0.5, m-0.5])."""
    axes = []
    for ns, nt in zip(source_dims, target_dims):
        t = np.arange(nt, dtype=np.float64)
        axes.append((t + 0.5) * (ns / nt) - 0.5)
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    return np.stack([gx, gy, gz], axis=-1)


def resample_scalar(vol: np.ndarray, target_dims) -> np.ndarray:
    """Resample a scalar volume to ``target_dims`` with trilinear interpolation."""
    target_dims = tuple(int(d) for d in target_dims)
    if any(d < 1 for d in target_dims):
        raise ValueError(f"target dims must each be >= 1, got {target_dims}")
    if target_dims == vol.shape:
        return vol.copy()
    coords = _target_coords(vol.shape, target_dims)
    return trilinear_sample(vol, coords, PadMode.REFLECT).astype(vol.dtype, copy=False)


def resample_nearest(labels: np.ndarray, target_dims) -> np.ndarray:
    """Resample a label volume to ``target_dims`` with nearest-neighbor lookup."""
    target_dims = tuple(int(d) for d in target_dims)
    if any(d < 1 for d in target_dims):
        raise ValueError(f"target dims must each be >= 1, got {target_dims}")
    if target_dims == labels.shape:
        return labels.copy()
    # Separable form of nearest_sample at _target_coords: the source coordinate
    # along each axis depends only on that axis, and always lands strictly
    # inside (-0.5, n - 0.5), so one index array per axis suffices.
    idx = []
    for ns, nt in zip(labels.shape, target_dims):
        src = (np.arange(nt, dtype=np.float64) + 0.5) * (ns / nt) - 0.5
        idx.append(np.ceil(src - 0.5).astype(np.int64))
    return np.ascontiguousarray(labels[np.ix_(*idx)])


def resample_to_grid(vol, target_dims):
    """Resample a Volume3 (trilinear) or LabelVolume (nearest) to a new grid."""
    if isinstance(vol, LabelVolume):
        return LabelVolume(resample_nearest(vol.labels, target_dims), vol.spacing)
    if isinstance(vol, Volume3):
        return Volume3(resample_scalar(vol.data, target_dims), vol.spacing)
    raise TypeError(f"expected Volume3 or LabelVolume, got {type(vol).__name__}")


def dft3(vol: np.ndarray) -> np.ndarray:
    """Forward 3D discrete Fourier transform (unnormalized, numpy convention)."""
    return np.fft.fftn(vol)


def idft3(spectrum: np.ndarray) -> np.ndarray:
    """Inverse 3D discrete Fourier transform; idft3(dft3(v)) == v to ~1e-6."""
    return np.fft.ifftn(spectrum)


def edt3(mask: np.ndarray, spacing=(1.0, 1.0, 1.0)) -> np.ndarray:
    """Exact Euclidean distance from each foreground voxel to the nearest
    background voxel, with the volume boundary counting as background.

    ``mask`` must be binary (values in {0, 1}); anisotropic ``spacing`` is
    respected. Background voxels map to 0.
    """
    mask = np.asarray(mask)
    vals = np.unique(mask)
    if not np.all(np.isin(vals, (0, 1))):
        raise ValueError("edt3 expects a binary mask with values in {0, 1}")
    padded = np.pad(mask.astype(bool), 1, mode="constant", constant_values=False)
    dist = ndimage.distance_transform_edt(padded, sampling=spacing)
    return dist[1:-1, 1:-1, 1:-1]
