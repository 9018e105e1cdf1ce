"""Star-convex polyhedron machinery: ray sets, dense ground-truth encoding
(per-voxel boundary distances plus a centerness map), candidate decoding with
greedy non-maximum suppression, rasterization, and voxelized IoU.

Candidate geometry (centers, radii, rasterization) is in voxel units; encode
additionally accepts a physical voxel spacing, which scales the measured ray
distances and the centerness distance transform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import ndimage

from .volume import edt3, nearest_sample


@dataclass(frozen=True)
class RaySet:
    """n near-uniform unit directions on the sphere."""

    dirs: np.ndarray  # (n, 3) float64 unit vectors

    @property
    def n_rays(self) -> int:
        return self.dirs.shape[0]


def make_rays(n: int = 96) -> RaySet:
    """Deterministic spherical Fibonacci lattice of n unit directions."""
    if n < 4:
        raise ValueError(f"need at least 4 rays, got {n}")
    i = np.arange(n, dtype=np.float64)
    z = 1.0 - 2.0 * (i + 0.5) / n
    r = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    theta = math.pi * (3.0 - math.sqrt(5.0)) * i
    dirs = np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=1)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return RaySet(dirs)


@dataclass
class StarEncoding:
    """Dense star-convex target: per-voxel ray distances and centerness.

    dists is (nx, ny, nz, n_rays), exactly 0 on background; prob is the
    per-instance max-normalized Euclidean distance transform, so every
    instance has at least one voxel scoring exactly 1.0.
    """

    dists: np.ndarray
    prob: np.ndarray


@dataclass
class StarCandidate:
    """A candidate polyhedron: center voxel, per-ray radii, centerness score."""

    center: np.ndarray
    dists: np.ndarray
    score: float

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)
        self.dists = np.asarray(self.dists, dtype=np.float32)
        if np.any(self.dists < 0):
            raise ValueError("candidate radii must be >= 0")
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score must be in [0, 1], got {self.score}")


@njit(cache=True)
def _label_at(labels, x, y, z):  # pragma: no cover
    # nearest voxel with the .5 tie toward floor; outside the volume reads -1
    ix = int(math.ceil(x - 0.5))
    iy = int(math.ceil(y - 0.5))
    iz = int(math.ceil(z - 0.5))
    nx, ny, nz = labels.shape
    if ix < 0 or iy < 0 or iz < 0 or ix >= nx or iy >= ny or iz >= nz:
        return -1
    return labels[ix, iy, iz]


@njit(cache=True)
def _march_rays(labels, points, ids, t_starts, dirs, inv_spacing, step, n_bisect, t_max):  # pragma: no cover
    nv = points.shape[0]
    nr = dirs.shape[0]
    out = np.zeros((nv, nr), dtype=np.float32)
    for v in range(nv):
        x0, y0, z0 = points[v, 0], points[v, 1], points[v, 2]
        lid = ids[v]
        # No boundary crossing can occur before the voxel's distance
        # transform minus the half-diagonal, so the march may start there.
        t0 = t_starts[v]
        for r in range(nr):
            dx = dirs[r, 0] * inv_spacing[0]
            dy = dirs[r, 1] * inv_spacing[1]
            dz = dirs[r, 2] * inv_spacing[2]
            t = t0 + step
            while t < t_max:
                if _label_at(labels, x0 + t * dx, y0 + t * dy, z0 + t * dz) != lid:
                    break
                t += step
            lo = t - step
            hi = t
            for _ in range(n_bisect):
                mid = 0.5 * (lo + hi)
                if _label_at(labels, x0 + mid * dx, y0 + mid * dy, z0 + mid * dz) == lid:
                    lo = mid
                else:
                    hi = mid
            out[v, r] = 0.5 * (lo + hi)
    return out


def encode(L: np.ndarray, rays: RaySet, spacing=(1.0, 1.0, 1.0)) -> StarEncoding:
    """Dense star-convex encoding of an instance map.

    For each foreground voxel, the distance along every ray to the first
    point whose nearest voxel belongs to a different instance (coarse march
    at half the smallest voxel extent, bisection-refined to 0.05 of it), and
    the per-instance max-normalized distance transform as centerness.
    """
    L = np.ascontiguousarray(L, dtype=np.int32)
    spacing = np.asarray(spacing, dtype=np.float64)
    n_rays = rays.n_rays
    dists = np.zeros((*L.shape, n_rays), dtype=np.float32)
    prob = np.zeros(L.shape, dtype=np.float32)

    fg = np.argwhere(L > 0)
    if fg.size:
        # Per-instance distance transform first: it is the centerness map and
        # a sound lower bound for where each ray march can start (the nearest
        # foreign voxel center is edt away, and the nearest-voxel membership
        # boundary can precede it by at most the half-diagonal of a voxel).
        edt_fg = np.zeros(L.shape, dtype=np.float32)
        for lid, sl in enumerate(ndimage.find_objects(L), start=1):
            if sl is None:
                continue
            mask = L[sl] == lid
            dist = edt3(mask.astype(np.int8), spacing)
            peak = dist.max()
            if peak > 0:
                np.copyto(edt_fg[sl], dist.astype(np.float32), where=mask)
                np.copyto(prob[sl], (dist / peak).astype(np.float32), where=mask)

        ids = L[fg[:, 0], fg[:, 1], fg[:, 2]]
        half_diag = 0.5 * float(np.linalg.norm(spacing))
        t_starts = np.maximum(
            edt_fg[fg[:, 0], fg[:, 1], fg[:, 2]].astype(np.float64) - half_diag - 1e-6, 0.0
        )
        unit = float(spacing.min())
        t_max = float(np.linalg.norm(np.array(L.shape) * spacing)) + 1.0
        d = _march_rays(
            L,
            fg.astype(np.float64),
            ids.astype(np.int32),
            t_starts,
            np.ascontiguousarray(rays.dirs),
            1.0 / spacing,
            0.5 * unit,
            4,
            t_max,
        )
        dists[fg[:, 0], fg[:, 1], fg[:, 2], :] = d
    return StarEncoding(dists, prob)


def is_star_convex(L: np.ndarray, instance_id: int, center) -> bool:
    """Whether every voxel of the instance sees ``center`` along a segment
    sampled at quarter-voxel steps that stays inside the instance."""
    pts = np.argwhere(L == instance_id).astype(np.float64)
    if pts.shape[0] == 0:
        raise ValueError(f"instance {instance_id} not present")
    center = np.asarray(center, dtype=np.float64)
    deltas = pts - center
    lens = np.linalg.norm(deltas, axis=1)
    far = lens > 1e-12
    unit = np.zeros_like(deltas)
    unit[far] = deltas[far] / lens[far, None]

    n_steps = int(math.ceil(lens.max() / 0.25)) + 1
    ts = np.minimum(np.arange(n_steps + 1)[None, :] * 0.25, lens[:, None])
    pos = center[None, None, :] + unit[:, None, :] * ts[:, :, None]
    sampled = nearest_sample(L, pos.reshape(-1, 3))
    return bool(np.all(sampled == instance_id))


@njit(cache=True)
def _rasterize_box(center, radii, dirs, ox, oy, oz, nx, ny, nz):  # pragma: no cover
    out = np.zeros((nx, ny, nz), dtype=np.bool_)
    nr = dirs.shape[0]
    max_r = 0.0
    min_r = np.inf
    for r in range(nr):
        if radii[r] > max_r:
            max_r = radii[r]
        if radii[r] < min_r:
            min_r = radii[r]
    for i in range(nx):
        x = ox + i - center[0]
        for j in range(ny):
            y = oy + j - center[1]
            for k in range(nz):
                z = oz + k - center[2]
                d = math.sqrt(x * x + y * y + z * z)
                if d <= 1e-9:
                    out[i, j, k] = True
                    continue
                if d > max_r:
                    continue
                # the interpolated radius is a convex combination of ray radii
                if d <= min_r:
                    out[i, j, k] = True
                    continue
                ux, uy, uz = x / d, y / d, z / d
                b1 = -2.0
                b2 = -2.0
                b3 = -2.0
                i1 = 0
                i2 = 0
                i3 = 0
                for r in range(nr):
                    dot = ux * dirs[r, 0] + uy * dirs[r, 1] + uz * dirs[r, 2]
                    if dot > b1:
                        b3, i3 = b2, i2
                        b2, i2 = b1, i1
                        b1, i1 = dot, r
                    elif dot > b2:
                        b3, i3 = b2, i2
                        b2, i2 = dot, r
                    elif dot > b3:
                        b3, i3 = dot, r
                w1 = 1.0 / (math.acos(min(1.0, max(-1.0, b1))) + 1e-9)
                w2 = 1.0 / (math.acos(min(1.0, max(-1.0, b2))) + 1e-9)
                w3 = 1.0 / (math.acos(min(1.0, max(-1.0, b3))) + 1e-9)
                rad = (w1 * radii[i1] + w2 * radii[i2] + w3 * radii[i3]) / (w1 + w2 + w3)
                out[i, j, k] = d <= rad
    return out


def _bbox(c: StarCandidate) -> tuple[np.ndarray, np.ndarray]:
    max_r = float(c.dists.max()) if c.dists.size else 0.0
    lo = np.floor(c.center - max_r).astype(np.int64)
    hi = np.ceil(c.center + max_r).astype(np.int64)
    return lo, hi


def _rasterize_local(c: StarCandidate, rays: RaySet, origin, shape) -> np.ndarray:
    return _rasterize_box(
        c.center,
        c.dists.astype(np.float64),
        np.ascontiguousarray(rays.dirs),
        float(origin[0]),
        float(origin[1]),
        float(origin[2]),
        int(shape[0]),
        int(shape[1]),
        int(shape[2]),
    )


def rasterize(c: StarCandidate, rays: RaySet, dims) -> np.ndarray:
    """Voxelize a candidate onto a volume grid: a voxel is inside iff its
    distance from the center is at most the radius interpolated from the 3
    angularly nearest rays (inverse geodesic-distance weights). The center
    voxel is always inside."""
    dims = tuple(int(d) for d in dims)
    return _rasterize_local(c, rays, (0, 0, 0), dims)


def poly_iou(a: StarCandidate, b: StarCandidate, rays: RaySet) -> float:
    """IoU of two candidates, exact at voxel resolution on a shared local
    grid; 0 when their bounding boxes are disjoint."""
    lo_a, hi_a = _bbox(a)
    lo_b, hi_b = _bbox(b)
    if np.any(hi_a < lo_b) or np.any(hi_b < lo_a):
        return 0.0
    lo = np.minimum(lo_a, lo_b)
    hi = np.maximum(hi_a, hi_b)
    shape = hi - lo + 1
    ra = _rasterize_local(a, rays, lo, shape)
    rb = _rasterize_local(b, rays, lo, shape)
    union = np.count_nonzero(ra | rb)
    if union == 0:
        return 1.0 if np.array_equal(a.center, b.center) else 0.0
    return float(np.count_nonzero(ra & rb) / union)


def _pair_iou(raster_a, lo_a, raster_b, lo_b) -> float:
    """IoU from two cached local rasters aligned by their grid origins."""
    hi_a = lo_a + np.array(raster_a.shape) - 1
    hi_b = lo_b + np.array(raster_b.shape) - 1
    lo = np.maximum(lo_a, lo_b)
    hi = np.minimum(hi_a, hi_b)
    ca = int(np.count_nonzero(raster_a))
    cb = int(np.count_nonzero(raster_b))
    if np.any(hi < lo):
        inter = 0
    else:
        sa = tuple(slice(l - o, h - o + 1) for l, h, o in zip(lo, hi, lo_a))
        sb = tuple(slice(l - o, h - o + 1) for l, h, o in zip(lo, hi, lo_b))
        inter = int(np.count_nonzero(raster_a[sa] & raster_b[sb]))
    union = ca + cb - inter
    return inter / union if union else 0.0


def decode_nms(
    enc: StarEncoding,
    rays: RaySet,
    prob_thresh: float = 0.5,
    nms_thresh: float = 0.3,
    grid_step: int = 2,
) -> tuple[list[StarCandidate], np.ndarray]:
    """Greedy score-ordered decoding of an encoding into instances.

    Candidates are the stride-``grid_step`` lattice voxels with centerness >=
    prob_thresh, processed by descending score (ties broken by lexicographic
    center coordinate). A candidate survives iff its voxelized IoU with every
    kept candidate is strictly below nms_thresh. Survivors are rasterized
    into a label volume in score order; higher scores win contested voxels.
    """
    if not (0.0 <= prob_thresh <= 1.0) or not (0.0 <= nms_thresh <= 1.0):
        raise ValueError("thresholds must be in [0, 1]")
    if grid_step < 1:
        raise ValueError(f"grid_step must be >= 1, got {grid_step}")
    dims = enc.prob.shape

    lattice = enc.prob[::grid_step, ::grid_step, ::grid_step]
    sel = np.argwhere(lattice >= prob_thresh) * grid_step
    if sel.size == 0:
        return [], np.zeros(dims, dtype=np.int32)
    scores = enc.prob[sel[:, 0], sel[:, 1], sel[:, 2]]
    order = np.lexsort((sel[:, 2], sel[:, 1], sel[:, 0], -scores))

    kept: list[StarCandidate] = []
    kept_rasters: list[tuple[np.ndarray, np.ndarray]] = []
    for idx in order:
        x, y, z = (int(v) for v in sel[idx])
        cand = StarCandidate(
            center=np.array([x, y, z], dtype=np.float64),
            dists=enc.dists[x, y, z, :],
            score=float(scores[idx]),
        )
        lo, hi = _bbox(cand)
        raster = _rasterize_local(cand, rays, lo, hi - lo + 1)
        suppressed = False
        for other, other_lo in kept_rasters:
            if _pair_iou(raster, lo, other, other_lo) >= nms_thresh:
                suppressed = True
                break
        if not suppressed:
            kept.append(cand)
            kept_rasters.append((raster, lo))

    labels = np.zeros(dims, dtype=np.int32)
    for lid, ((raster, lo), _cand) in enumerate(zip(kept_rasters, kept), start=1):
        hi = lo + np.array(raster.shape)
        vlo = np.maximum(lo, 0)
        vhi = np.minimum(hi, np.array(dims))
        if np.any(vhi <= vlo):
            continue
        vol_sl = tuple(slice(a, b) for a, b in zip(vlo, vhi))
        ras_sl = tuple(slice(a - o, b - o) for a, b, o in zip(vlo, vhi, lo))
        region = labels[vol_sl]
        region[(region == 0) & raster[ras_sl]] = lid
    return kept, labels
