"""Stochastic field generation: 3D Perlin gradient noise and smooth random
deformation fields.

The Perlin variant is classic lattice gradient noise: hashed unit gradients on
an integer lattice, quintic fade, trilinear blend. Values are scaled by
2/sqrt(3) (the analytic range bound for unit gradients in 3D) so a single
octave lies in [-1, 1]; fractal sums are renormalized by the total amplitude,
preserving that range. Noise is exactly 0 at lattice corners.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from .rng import as_generator, derive_seed
from .volume import PadMode, nearest_sample, trilinear_sample

# 12 cube-edge directions, unit length
_GRADS = np.array(
    [
        [1, 1, 0], [-1, 1, 0], [1, -1, 0], [-1, -1, 0],
        [1, 0, 1], [-1, 0, 1], [1, 0, -1], [-1, 0, -1],
        [0, 1, 1], [0, -1, 1], [0, 1, -1], [0, -1, -1],
    ],
    dtype=np.float32,
) / np.float32(math.sqrt(2.0))

_RANGE_SCALE = np.float32(2.0 / math.sqrt(3.0))


@dataclass(frozen=True)
class PerlinSpec:
    """Parameters of a fractal Perlin noise field.

    lattice_period is the number of voxels per gradient cell (scalar or
    per-axis); each octave halves it. persistence is the amplitude decay per
    octave in (0, 1].
    """

    lattice_period: float | tuple[float, float, float] = 16.0
    octaves: int = 4
    persistence: float = 0.5
    seed: int = 0

    def periods(self) -> tuple[float, float, float]:
        p = self.lattice_period
        if isinstance(p, (int, float)):
            return (float(p),) * 3
        return tuple(float(v) for v in p)

    def validate(self) -> None:
        if any(p < 2 for p in self.periods()):
            raise ValueError(f"lattice_period must be >= 2 per axis, got {self.lattice_period}")
        if self.octaves < 1:
            raise ValueError(f"octaves must be >= 1, got {self.octaves}")
        if not (0.0 < self.persistence <= 1.0):
            raise ValueError(f"persistence must be in (0, 1], got {self.persistence}")


def _splitmix64(h: np.ndarray) -> np.ndarray:
    """Stateless 64-bit mixer; operates on uint64 arrays (wrapping)."""
    z = h + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _lattice_gradients(shape, seed: int) -> np.ndarray:
    """Hash every lattice point of a (lx, ly, lz) grid into one of 12 unit
    gradients; returns float32 array of shape (lx, ly, lz, 3)."""
    lx, ly, lz = shape
    ix = np.arange(lx, dtype=np.uint64)[:, None, None]
    iy = np.arange(ly, dtype=np.uint64)[None, :, None]
    iz = np.arange(lz, dtype=np.uint64)[None, None, :]
    h = _splitmix64(
        ix * np.uint64(0x8DA6B343)
        ^ iy * np.uint64(0xD8163841)
        ^ iz * np.uint64(0xCB1AB31F)
        ^ np.uint64(seed)
    )
    return _GRADS[(h % np.uint64(12)).astype(np.int64)]


@njit(cache=True)
def _perlin_octave(out, grads, inv_px, inv_py, inv_pz, amplitude):  # pragma: no cover
    nx, ny, nz = out.shape
    for x in range(nx):
        lx = x * inv_px
        ix = int(lx)
        fx = lx - ix
        u = fx * fx * fx * (fx * (fx * 6.0 - 15.0) + 10.0)
        for y in range(ny):
            ly = y * inv_py
            iy = int(ly)
            fy = ly - iy
            v = fy * fy * fy * (fy * (fy * 6.0 - 15.0) + 10.0)
            for z in range(nz):
                lz = z * inv_pz
                iz = int(lz)
                fz = lz - iz
                w = fz * fz * fz * (fz * (fz * 6.0 - 15.0) + 10.0)

                n000 = grads[ix, iy, iz, 0] * fx + grads[ix, iy, iz, 1] * fy + grads[ix, iy, iz, 2] * fz
                n100 = grads[ix + 1, iy, iz, 0] * (fx - 1) + grads[ix + 1, iy, iz, 1] * fy + grads[ix + 1, iy, iz, 2] * fz
                n010 = grads[ix, iy + 1, iz, 0] * fx + grads[ix, iy + 1, iz, 1] * (fy - 1) + grads[ix, iy + 1, iz, 2] * fz
                n110 = grads[ix + 1, iy + 1, iz, 0] * (fx - 1) + grads[ix + 1, iy + 1, iz, 1] * (fy - 1) + grads[ix + 1, iy + 1, iz, 2] * fz
                n001 = grads[ix, iy, iz + 1, 0] * fx + grads[ix, iy, iz + 1, 1] * fy + grads[ix, iy, iz + 1, 2] * (fz - 1)
                n101 = grads[ix + 1, iy, iz + 1, 0] * (fx - 1) + grads[ix + 1, iy, iz + 1, 1] * fy + grads[ix + 1, iy, iz + 1, 2] * (fz - 1)
                n011 = grads[ix, iy + 1, iz + 1, 0] * fx + grads[ix, iy + 1, iz + 1, 1] * (fy - 1) + grads[ix, iy + 1, iz + 1, 2] * (fz - 1)
                n111 = grads[ix + 1, iy + 1, iz + 1, 0] * (fx - 1) + grads[ix + 1, iy + 1, iz + 1, 1] * (fy - 1) + grads[ix + 1, iy + 1, iz + 1, 2] * (fz - 1)

                x00 = n000 + u * (n100 - n000)
                x10 = n010 + u * (n110 - n010)
                x01 = n001 + u * (n101 - n001)
                x11 = n011 + u * (n111 - n011)
                y0 = x00 + v * (x10 - x00)
                y1 = x01 + v * (x11 - x01)
                out[x, y, z] += amplitude * (y0 + w * (y1 - y0))


def perlin3(dims, spec: PerlinSpec) -> np.ndarray:
    """Fractal Perlin noise volume of the given dims; float32 in [-1, 1].

    Deterministic per (dims, spec).
    """
    spec.validate()
    dims = tuple(int(d) for d in dims)
    if any(d < 1 for d in dims):
        raise ValueError(f"dims must each be >= 1, got {dims}")
    periods = spec.periods()

    out = np.zeros(dims, dtype=np.float32)
    total_amp = 0.0
    for k in range(spec.octaves):
        amp = spec.persistence**k
        total_amp += amp
        octave_periods = [p / (2**k) for p in periods]
        lattice_shape = [int(math.floor((d - 1) / p)) + 2 for d, p in zip(dims, octave_periods)]
        grads = _lattice_gradients(lattice_shape, derive_seed(spec.seed, "octave", k))
        _perlin_octave(
            out,
            grads,
            1.0 / octave_periods[0],
            1.0 / octave_periods[1],
            1.0 / octave_periods[2],
            np.float32(amp) * _RANGE_SCALE,
        )
    out /= np.float32(total_amp)
    return out


def perlin_multichannel(dims, b: int, spec: PerlinSpec) -> list[np.ndarray]:
    """b independent Perlin volumes with per-channel seeds derived from
    (spec.seed, channel index)."""
    if b < 1:
        raise ValueError(f"channel count must be >= 1, got {b}")
    return [
        perlin3(dims, replace(spec, seed=derive_seed(spec.seed, "channel", c)))
        for c in range(b)
    ]


def _upsample_linear(arr: np.ndarray, axis: int, n_target: int, spacing: float) -> np.ndarray:
    """Linear interpolation along one axis from control-point spacing to a
    voxel grid (control point k sits at voxel k * spacing)."""
    pos = np.arange(n_target, dtype=np.float64) / spacing
    i0 = np.minimum(np.floor(pos).astype(np.int64), arr.shape[axis] - 2)
    f = (pos - i0).astype(arr.dtype)
    lo = np.take(arr, i0, axis=axis)
    hi = np.take(arr, i0 + 1, axis=axis)
    shape = [1] * arr.ndim
    shape[axis] = n_target
    f = f.reshape(shape)
    return lo * (1 - f) + hi * f


def smooth_deform_field(dims, control_spacing: float, max_disp: float, seed) -> np.ndarray:
    """A smooth per-voxel displacement field, shape (nx, ny, nz, 3).

    Displacements are drawn uniformly in [-max_disp, max_disp] per axis at
    coarse control points (every ``control_spacing`` voxels) and trilinearly
    upsampled, so the sup-norm bound carries to every voxel.
    """
    if control_spacing < 2:
        raise ValueError(f"control_spacing must be >= 2, got {control_spacing}")
    if max_disp < 0:
        raise ValueError(f"max_disp must be >= 0, got {max_disp}")
    dims = tuple(int(d) for d in dims)
    rng = as_generator(seed)
    n_ctrl = [max(2, int(math.ceil((d - 1) / control_spacing)) + 1) for d in dims]
    field = rng.uniform(-max_disp, max_disp, size=(*n_ctrl, 3)).astype(np.float32)
    for axis in range(3):
        field = _upsample_linear(field, axis, dims[axis], control_spacing)
    return field


def warp(vol: np.ndarray, field: np.ndarray, interp: str = "trilinear", pad: PadMode = PadMode.ZERO) -> np.ndarray:
    """Pull-back warp: out(x) = sample(vol, x + field(x)).

    interp is "trilinear" for scalar volumes or "nearest" for label volumes
    (nearest never invents labels).
    """
    if field.shape[:3] != vol.shape or field.shape[-1] != 3:
        raise ValueError(f"field shape {field.shape} does not match volume {vol.shape}")
    base = np.stack(
        np.meshgrid(*(np.arange(d, dtype=np.float32) for d in vol.shape), indexing="ij"),
        axis=-1,
    )
    coords = base + field
    if interp == "trilinear":
        return trilinear_sample(vol, coords, pad).astype(vol.dtype, copy=False)
    if interp == "nearest":
        return nearest_sample(vol, coords, pad)
    raise ValueError(f"unknown interp {interp!r}")
