"""Synthesis of star-convex instance label maps.

The generator places spheres at the vertices of a regular 3D grid, jitters and
rescales them independently, removes a random fraction (at most a third), then
assigns each voxel to the instance minimizing a Perlin-corrupted distance

    d_i(x) = ||x - c_i|| + noise_gain * r * p(x)

where r is the base radius and p a shared Perlin field; the voxel is labeled
argmin_i d_i(x) if that minimum is below the instance radius r_i, else
background. Finally the map is zero- or reflection-padded per axis (variable
instance density) and rescaled to a common output grid.

Corrupted instances may come out non-star-convex or disconnected; that is
deliberate and no rejection is applied.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit
from scipy import ndimage

from .noise import PerlinSpec, perlin3
from .rng import as_generator, derive_seed
from .volume import PadMode, resample_nearest


@dataclass(frozen=True)
class InstanceSeed:
    """A sphere seed: continuous center (voxel coords) and radius (voxels)."""

    center: tuple[float, float, float]
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError(f"radius must be > 0, got {self.radius}")


@dataclass
class LabelGenConfig:
    grid_shape: tuple[int, int, int] = (4, 4, 4)
    base_radius: float = 10.0
    jitter_frac: float = 0.35          # max |translation| as a fraction of grid pitch
    scale_range: tuple[float, float] = (0.7, 1.3)
    removal_frac_max: float = 1.0 / 3.0
    perlin_spec: PerlinSpec = field(default_factory=PerlinSpec)
    noise_gain: float = 0.9
    canvas_dims: tuple[int, int, int] = (128, 128, 128)
    output_dims: tuple[int, int, int] = (128, 128, 128)
    pad_frac_range: tuple[float, float] = (0.0, 0.25)
    # None draws Zero or Reflect uniformly per sample; set to pin one mode.
    pad_mode: PadMode | None = None


def place_instances(cfg: LabelGenConfig, seed) -> list[InstanceSeed]:
    """Jittered, rescaled, randomly thinned sphere-grid seeds.

    Draw order (fixed for reproducibility): jitters, scales, removal fraction,
    removal choice. Surviving count n' always satisfies ceil(2n/3) <= n' <= n
    when removal_frac_max <= 1/3.
    """
    gx, gy, gz = cfg.grid_shape
    if min(gx, gy, gz) < 1:
        raise ValueError(f"grid_shape must be >= 1 per axis, got {cfg.grid_shape}")
    rng = as_generator(seed)

    pitch = np.array([c / g for c, g in zip(cfg.canvas_dims, cfg.grid_shape)])
    idx = np.stack(
        np.meshgrid(np.arange(gx), np.arange(gy), np.arange(gz), indexing="ij"), axis=-1
    ).reshape(-1, 3)
    centers = (idx + 0.5) * pitch - 0.5

    n = len(centers)
    jitter = rng.uniform(-cfg.jitter_frac, cfg.jitter_frac, size=(n, 3)) * pitch
    scales = rng.uniform(cfg.scale_range[0], cfg.scale_range[1], size=n)
    centers = centers + jitter
    radii = cfg.base_radius * scales

    frac = rng.uniform(0.0, cfg.removal_frac_max)
    n_remove = int(frac * n)
    removed = set(rng.choice(n, size=n_remove, replace=False).tolist())
    return [
        InstanceSeed(tuple(centers[i]), float(radii[i]))
        for i in range(n)
        if i not in removed
    ]


def renumber_labels(labels: np.ndarray) -> np.ndarray:
    """Relabel to consecutive ids 1..n', preserving ascending id order."""
    ids = np.unique(labels)
    ids = ids[ids != 0]
    if ids.size == 0:
        return labels.copy()
    lut = np.zeros(int(ids.max()) + 1, dtype=labels.dtype)
    lut[ids] = np.arange(1, ids.size + 1, dtype=labels.dtype)
    return lut[labels]


@njit(cache=True)
def _assign_kernel(dx2, dy2, dz2, noise, radii, out):  # pragma: no cover
    nx, ny, nz = noise.shape
    n = radii.shape[0]
    for x in range(nx):
        for y in range(ny):
            for z in range(nz):
                best = np.inf
                bi = 0
                for i in range(n):
                    d2 = (dx2[x, i] + dy2[y, i]) + dz2[z, i]
                    if d2 < best:
                        best = d2
                        bi = i
                d = np.sqrt(best) + noise[x, y, z]
                out[x, y, z] = bi + 1 if d < radii[bi] else 0


def assign_labels(seeds: list[InstanceSeed], cfg: LabelGenConfig, seed) -> np.ndarray:
    """Rasterize seeds into an instance map on cfg.canvas_dims.

    Ties on the corrupted distance go to the lower instance index. Output ids
    are renumbered consecutively (instances that win no voxel are dropped).
    """
    if not seeds:
        raise ValueError("assign_labels requires at least one seed")
    rng = as_generator(seed)
    dims = tuple(int(d) for d in cfg.canvas_dims)

    field_seed = derive_seed(cfg.perlin_spec.seed, "assign-field", int(rng.integers(2**31)))
    p = perlin3(dims, replace(cfg.perlin_spec, seed=field_seed))
    noise = (cfg.noise_gain * cfg.base_radius) * p

    # The Perlin term is shared across instances, so the argmin over corrupted
    # distances equals the argmin over plain distances; the noise only moves
    # the radius test. Squared axis distances are precomputed per seed (all in
    # float32, matching a direct elementwise evaluation bit for bit).
    centers = np.array([s.center for s in seeds], dtype=np.float32)
    radii = np.array([s.radius for s in seeds], dtype=np.float32)
    tables = [
        (np.arange(d, dtype=np.float32)[:, None] - centers[None, :, a]) ** 2
        for a, d in enumerate(dims)
    ]
    labels = np.empty(dims, dtype=np.int32)
    _assign_kernel(
        np.ascontiguousarray(tables[0]),
        np.ascontiguousarray(tables[1]),
        np.ascontiguousarray(tables[2]),
        noise.astype(np.float32),
        radii,
        labels,
    )
    return renumber_labels(labels)


def relabel_fold_fragments(labels: np.ndarray, primary: np.ndarray) -> np.ndarray:
    """Give fresh ids to duplicated instance fragments created by reflective
    folding (mirror padding, reflect-padded warps).

    ``primary`` marks the voxels that come from the original (unfolded)
    domain. For each id, connected components (6-neighborhood) that contain no
    primary voxel are mirror copies and get new ids; components touching the
    primary region keep theirs, including mirror halves fused across the seam.
    """
    out = labels.copy()
    next_id = int(labels.max())
    objects = ndimage.find_objects(labels)
    for lid, sl in enumerate(objects, start=1):
        if sl is None:
            continue
        mask = labels[sl] == lid
        comp, ncomp = ndimage.label(mask)
        if ncomp <= 1:
            continue
        primary_ids = np.unique(comp[primary[sl] & mask])
        for c in range(1, ncomp + 1):
            if c not in primary_ids:
                next_id += 1
                out[sl][comp == c] = next_id
    return out


def density_pad_rescale(L: np.ndarray, cfg: LabelGenConfig, seed) -> np.ndarray:
    """Pad each axis by a random fraction (zero or reflect) and rescale to
    cfg.output_dims, simulating varying instance densities.

    Reflection can duplicate instances; duplicated mirror fragments are split
    off as new instance ids so instance-level evaluation stays consistent.
    """
    if L.size == 0:
        raise ValueError("empty label volume")
    rng = as_generator(seed)

    pads = []
    for n in L.shape:
        f = rng.uniform(cfg.pad_frac_range[0], cfg.pad_frac_range[1])
        total = int(round(f * n))
        before = int(rng.integers(0, total + 1))
        pads.append((before, total - before))

    if cfg.pad_mode is None:
        mode = (PadMode.ZERO, PadMode.REFLECT)[int(rng.integers(2))]
    else:
        mode = cfg.pad_mode

    if any(b or a for b, a in pads):
        if mode is PadMode.ZERO:
            padded = np.pad(L, pads, mode="constant", constant_values=0)
        else:
            padded = np.pad(L, pads, mode="symmetric")
            primary = np.zeros(padded.shape, dtype=bool)
            primary[tuple(slice(b, b + n) for (b, _), n in zip(pads, L.shape))] = True
            padded = relabel_fold_fragments(padded, primary)
    else:
        padded = L

    return renumber_labels(resample_nearest(padded, cfg.output_dims))
