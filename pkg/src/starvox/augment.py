"""The stochastic augmentation sequence applied to (image, label) samples.

Stage order is fixed: crop, affine, bias field, k-space spikes, Gibbs
ringing, sharpen, gamma, cutout, axis-wise blur, flips, 90-degree rotations,
elastic deformation, edge zero-padding, terminal cutout, noise. Spatial
stages transform image and labels jointly with identical geometric
parameters (trilinear for the image, nearest for labels); the rest touch the
image only. Each stage fires independently with its configured probability
and draws from its own counter-based stream keyed by (seed, stage id), so
enabling or disabling one stage never perturbs another stage's draws.

Mid-pipeline cutout zeroes only the image (an imaging artifact); terminal
cutout and edge padding zero both channels (blank acquisition regions that
noise injection must subsequently skip, since noise applies only to non-zero
voxels).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np
from scipy import ndimage

from .labelgen import relabel_fold_fragments, renumber_labels
from .volume import PadMode, nearest_sample, trilinear_sample
from .noise import smooth_deform_field, warp


@dataclass
class JointSample:
    """An (image, labels) pair on a common grid."""

    image: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.image.shape != self.labels.shape:
            raise ValueError(
                f"image {self.image.shape} and labels {self.labels.shape} dims differ"
            )


# --- stage configs ---------------------------------------------------------

@dataclass
class CropCfg:
    p: float = 1.0
    target: tuple[int, int, int] = (64, 64, 64)


@dataclass
class AffineCfg:
    p: float = 0.8
    max_translate_frac: float = 0.1
    max_rotate_deg: float = 30.0
    scale_range: tuple[float, float] = (0.8, 1.3)
    max_shear: float = 0.1


@dataclass
class BiasFieldCfg:
    p: float = 0.5
    coeff: float = 0.1
    order: int = 3


@dataclass
class KspaceSpikeCfg:
    p: float = 0.5
    max_spikes: int = 2
    magnitude_range: tuple[float, float] = (10.0, 100.0)


@dataclass
class GibbsCfg:
    p: float = 0.5
    cutoff_range: tuple[float, float] = (0.4, 0.95)


@dataclass
class SharpenCfg:
    p: float = 0.5
    alpha_range: tuple[float, float] = (0.5, 2.0)
    blur_sigma: float = 1.0


@dataclass
class GammaCfg:
    p: float = 0.5
    log_gamma_range: tuple[float, float] = (-0.7, 0.7)


@dataclass
class CutoutCfg:
    p: float = 0.5
    max_boxes: int = 4
    size_frac_range: tuple[float, float] = (0.05, 0.25)


@dataclass
class AxisBlurCfg:
    p: float = 0.5
    sigma_range: tuple[float, float] = (0.0, 1.5)


@dataclass
class FlipCfg:
    p: float = 1.0


@dataclass
class Rot90Cfg:
    p: float = 1.0


@dataclass
class ElasticCfg:
    p: float = 0.5
    control_spacing: float = 16.0
    max_disp: float = 4.0


@dataclass
class EdgeZeroPadCfg:
    p: float = 0.3
    max_width_frac: float = 0.15


@dataclass
class TerminalCutoutCfg:
    p: float = 0.3
    max_boxes: int = 2
    size_frac_range: tuple[float, float] = (0.1, 0.3)


@dataclass
class NoiseCfg:
    p: float = 0.8
    families: tuple[str, ...] = ("gaussian", "poisson", "speckle")
    gaussian_sigma_range: tuple[float, float] = (0.01, 0.1)
    poisson_scale: float = 255.0   # photon count for intensity 1.0; <= 0 disables
    speckle_sigma_range: tuple[float, float] = (0.05, 0.3)


@dataclass
class AugmentConfig:
    crop: CropCfg = field(default_factory=CropCfg)
    affine: AffineCfg = field(default_factory=AffineCfg)
    bias_field: BiasFieldCfg = field(default_factory=BiasFieldCfg)
    kspace_spike: KspaceSpikeCfg = field(default_factory=KspaceSpikeCfg)
    gibbs: GibbsCfg = field(default_factory=GibbsCfg)
    sharpen: SharpenCfg = field(default_factory=SharpenCfg)
    gamma: GammaCfg = field(default_factory=GammaCfg)
    cutout: CutoutCfg = field(default_factory=CutoutCfg)
    axis_blur: AxisBlurCfg = field(default_factory=AxisBlurCfg)
    flips: FlipCfg = field(default_factory=FlipCfg)
    rot90: Rot90Cfg = field(default_factory=Rot90Cfg)
    elastic: ElasticCfg = field(default_factory=ElasticCfg)
    edge_zero_pad: EdgeZeroPadCfg = field(default_factory=EdgeZeroPadCfg)
    terminal_cutout: TerminalCutoutCfg = field(default_factory=TerminalCutoutCfg)
    noise: NoiseCfg = field(default_factory=NoiseCfg)


STAGE_ORDER = [f.name for f in fields(AugmentConfig)]
_STAGE_IDS = {name: i for i, name in enumerate(STAGE_ORDER)}


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


# --- joint spatial stages ---------------------------------------------------

def crop_random(s: JointSample, target, seed) -> JointSample:
    """Axis-aligned random crop, identical offsets for image and labels;
    labels renumbered so absent instances are dropped."""
    target = tuple(int(t) for t in target)
    dims = s.image.shape
    if any(t > d for t, d in zip(target, dims)):
        raise ValueError(f"crop target {target} exceeds source dims {dims}")
    if any(t < 1 for t in target):
        raise ValueError(f"crop target must be >= 1 per axis, got {target}")
    rng = _rng(seed)
    offs = [int(rng.integers(0, d - t + 1)) for t, d in zip(target, dims)]
    sl = tuple(slice(o, o + t) for o, t in zip(offs, target))
    return JointSample(
        np.ascontiguousarray(s.image[sl]),
        renumber_labels(np.ascontiguousarray(s.labels[sl])),
    )


@dataclass(frozen=True)
class AffineParams:
    """A sampled affine map p -> A (p - c) + c + t about the volume center c."""

    matrix: np.ndarray       # (3, 3)
    translation: np.ndarray  # (3,)


def sample_affine_params(cfg: AffineCfg, dims, rng) -> AffineParams:
    """Draw rotation * shear * scale plus translation; resamples internally
    while |det| < 1e-6 so a singular map is never returned."""
    while True:
        ang = np.deg2rad(rng.uniform(-cfg.max_rotate_deg, cfg.max_rotate_deg, size=3))
        cx, sx = math.cos(ang[0]), math.sin(ang[0])
        cy, sy = math.cos(ang[1]), math.sin(ang[1])
        cz, sz = math.cos(ang[2]), math.sin(ang[2])
        rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
        ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
        rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
        shear = np.eye(3)
        shear[np.triu_indices(3, 1)] = rng.uniform(-cfg.max_shear, cfg.max_shear, size=3)
        shear[np.tril_indices(3, -1)] = rng.uniform(-cfg.max_shear, cfg.max_shear, size=3)
        scale = np.diag(rng.uniform(cfg.scale_range[0], cfg.scale_range[1], size=3))
        a = rz @ ry @ rx @ shear @ scale
        t = rng.uniform(-cfg.max_translate_frac, cfg.max_translate_frac, size=3) * np.array(dims)
        if abs(np.linalg.det(a)) >= 1e-6:
            return AffineParams(a, t)


def affine_joint(s: JointSample, cfg: AffineCfg, seed, params: AffineParams | None = None) -> JointSample:
    """One affine map applied to both channels with reflection padding.

    Reflection can pull mirror copies of instances into view; fragments whose
    source coordinates fell entirely outside the original extent are split
    off as new instance ids (same rule as reflective density padding).
    """
    rng = _rng(seed)
    dims = s.image.shape
    if params is None:
        params = sample_affine_params(cfg, dims, rng)
    c = (np.array(dims, dtype=np.float64) - 1.0) / 2.0
    inv = np.linalg.inv(params.matrix)

    grid = np.stack(
        np.meshgrid(*(np.arange(d, dtype=np.float64) for d in dims), indexing="ij"),
        axis=-1,
    )
    src = (grid - c - params.translation) @ inv.T + c

    image = trilinear_sample(s.image, src, PadMode.REFLECT).astype(np.float32)
    labels = nearest_sample(s.labels, src, PadMode.REFLECT)

    hi = np.array(dims, dtype=np.float64) - 0.5
    primary = np.all((src >= -0.5) & (src <= hi), axis=-1)
    if not primary.all():
        labels = relabel_fold_fragments(labels, primary)
    return JointSample(image, labels)


def flip_rot90_joint(s: JointSample, seed) -> JointSample:
    """Sampled axis flips followed by 90-degree plane rotations, applied as
    exact voxel permutations to both channels. Rotations in non-square planes
    are skipped."""
    rng = _rng(seed)
    s = _flip(s, rng)
    return _rot90(s, rng)


def _flip(s: JointSample, rng) -> JointSample:
    image, labels = s.image, s.labels
    for axis in range(3):
        if rng.integers(2):
            image = np.flip(image, axis)
            labels = np.flip(labels, axis)
    return JointSample(np.ascontiguousarray(image), np.ascontiguousarray(labels))


def _rot90(s: JointSample, rng) -> JointSample:
    image, labels = s.image, s.labels
    for axes in ((0, 1), (0, 2), (1, 2)):
        k = int(rng.integers(4))
        if k and image.shape[axes[0]] == image.shape[axes[1]]:
            image = np.rot90(image, k, axes)
            labels = np.rot90(labels, k, axes)
    return JointSample(np.ascontiguousarray(image), np.ascontiguousarray(labels))


def elastic_joint(s: JointSample, cfg: ElasticCfg, seed) -> JointSample:
    """One smooth displacement field warps both channels with zero padding."""
    rng = _rng(seed)
    if cfg.max_disp == 0:
        return JointSample(s.image.copy(), s.labels.copy())
    fld = smooth_deform_field(s.image.shape, cfg.control_spacing, cfg.max_disp, rng)
    return JointSample(
        warp(s.image, fld, "trilinear", PadMode.ZERO),
        warp(s.labels, fld, "nearest", PadMode.ZERO),
    )


def edge_zero_pad(s: JointSample, cfg: EdgeZeroPadCfg, seed) -> JointSample:
    """Zero random-width slabs at the volume faces in image and labels."""
    rng = _rng(seed)
    image, labels = s.image.copy(), s.labels.copy()
    for axis, n in enumerate(image.shape):
        max_w = int(round(cfg.max_width_frac * n))
        lo = int(rng.integers(0, max_w + 1))
        hi = int(rng.integers(0, max_w + 1))
        if lo:
            sl = [slice(None)] * 3
            sl[axis] = slice(0, lo)
            image[tuple(sl)] = 0
            labels[tuple(sl)] = 0
        if hi:
            sl = [slice(None)] * 3
            sl[axis] = slice(n - hi, n)
            image[tuple(sl)] = 0
            labels[tuple(sl)] = 0
    return JointSample(image, labels)


def _sample_boxes(shape, max_boxes, size_frac_range, rng):
    boxes = []
    if max_boxes < 1:
        return boxes
    k = int(rng.integers(1, max_boxes + 1))
    for _ in range(k):
        sl = []
        for n in shape:
            size = max(1, int(round(rng.uniform(*size_frac_range) * n)))
            size = min(size, n)
            start = int(rng.integers(0, n - size + 1))
            sl.append(slice(start, start + size))
        boxes.append(tuple(sl))
    return boxes


def terminal_cutout(s: JointSample, cfg: TerminalCutoutCfg, seed) -> JointSample:
    """Zero random boxes in BOTH channels, so labels never claim blank image
    regions (noise injection later skips exact zeros)."""
    rng = _rng(seed)
    image, labels = s.image.copy(), s.labels.copy()
    for box in _sample_boxes(image.shape, cfg.max_boxes, cfg.size_frac_range, rng):
        image[box] = 0
        labels[box] = 0
    return JointSample(image, labels)


# --- image-only stages ------------------------------------------------------

def bias_field(img: np.ndarray, cfg: BiasFieldCfg, seed) -> np.ndarray:
    """Multiply by exp(P(x)) for a random low-order polynomial P on [-1, 1]^3
    with coefficients ~ U(-coeff, coeff); clamp to [0, 1]."""
    rng = _rng(seed)
    if cfg.coeff == 0:
        return img.copy()
    axes = [np.linspace(-1.0, 1.0, n) if n > 1 else np.zeros(n) for n in img.shape]
    p = np.zeros(img.shape, dtype=np.float64)
    for a in range(cfg.order + 1):
        for b in range(cfg.order + 1 - a):
            for c in range(cfg.order + 1 - a - b):
                coef = rng.uniform(-cfg.coeff, cfg.coeff)
                p += coef * (axes[0] ** a)[:, None, None] * (axes[1] ** b)[None, :, None] * (axes[2] ** c)[None, None, :]
    return np.clip(img * np.exp(p), 0.0, 1.0).astype(np.float32)


def apply_kspace_spikes(img: np.ndarray, bins: np.ndarray, factors: np.ndarray) -> np.ndarray:
    """Multiply the given non-DC spectrum bins by the given factors, invert,
    take the real part, and min-max renormalize to [0, 1]."""
    f = np.fft.fftn(img.astype(np.float64))
    flat = f.reshape(-1)
    flat[bins] *= factors
    out = np.fft.ifftn(f).real
    lo, hi = out.min(), out.max()
    if hi > lo:
        out = (out - lo) / (hi - lo)
    else:
        out = np.clip(out, 0.0, 1.0)
    return out.astype(np.float32)


def kspace_spike(img: np.ndarray, cfg: KspaceSpikeCfg, seed) -> np.ndarray:
    """Corrupt 1..max_spikes random non-DC frequency bins by a large factor."""
    rng = _rng(seed)
    if cfg.max_spikes < 1:
        return img.copy()
    k = int(rng.integers(1, cfg.max_spikes + 1))
    bins = rng.choice(img.size - 1, size=k, replace=False) + 1
    factors = rng.uniform(cfg.magnitude_range[0], cfg.magnitude_range[1], size=k)
    return apply_kspace_spikes(img, bins, factors)


def gibbs_lowpass(img: np.ndarray, cutoff: float) -> np.ndarray:
    """Zero all spectrum coefficients with normalized radius > cutoff and
    invert (real part, no clamping). Radius is normalized so the spectrum
    corner sits at 1."""
    if not (0.0 < cutoff <= 1.0):
        raise ValueError(f"cutoff must be in (0, 1], got {cutoff}")
    freqs = [np.fft.fftfreq(n) / 0.5 for n in img.shape]
    r2 = (
        (freqs[0] ** 2)[:, None, None]
        + (freqs[1] ** 2)[None, :, None]
        + (freqs[2] ** 2)[None, None, :]
    ) / 3.0
    mask = r2 <= cutoff * cutoff
    return np.fft.ifftn(np.fft.fftn(img.astype(np.float64)) * mask).real


def gibbs_ringing(img: np.ndarray, cfg: GibbsCfg, seed) -> np.ndarray:
    """Low-pass truncation of the spectrum (ringing near sharp edges)."""
    rng = _rng(seed)
    cutoff = float(rng.uniform(cfg.cutoff_range[0], cfg.cutoff_range[1]))
    if cutoff >= 1.0:
        return img.copy()
    return np.clip(gibbs_lowpass(img, cutoff), 0.0, 1.0).astype(np.float32)


def sharpen(img: np.ndarray, cfg: SharpenCfg, seed) -> np.ndarray:
    """Unsharp masking: img + alpha * (img - gaussian_blur(img)), clamped."""
    rng = _rng(seed)
    alpha = float(rng.uniform(cfg.alpha_range[0], cfg.alpha_range[1]))
    if alpha == 0.0:
        return img.copy()
    blurred = ndimage.gaussian_filter(img, sigma=cfg.blur_sigma, mode="reflect")
    return np.clip(img + alpha * (img - blurred), 0.0, 1.0).astype(np.float32)


def gamma_adjust(img: np.ndarray, cfg: GammaCfg, seed) -> np.ndarray:
    """Raise min-max normalized intensities to a log-uniform exponent, then
    restore the original range. Constant images pass through unchanged."""
    rng = _rng(seed)
    gamma = math.exp(rng.uniform(cfg.log_gamma_range[0], cfg.log_gamma_range[1]))
    if gamma == 1.0:
        return img.copy()
    lo, hi = float(img.min()), float(img.max())
    if hi - lo < 1e-12:
        return img.copy()
    out = ((img - lo) / (hi - lo)) ** gamma * (hi - lo) + lo
    return out.astype(np.float32)


def cutout(img: np.ndarray, cfg: CutoutCfg, seed) -> np.ndarray:
    """Zero 1..max_boxes random boxes in the image only (imaging artifact;
    labels untouched)."""
    rng = _rng(seed)
    out = img.copy()
    for box in _sample_boxes(img.shape, cfg.max_boxes, cfg.size_frac_range, rng):
        out[box] = 0
    return out


def axis_blur(img: np.ndarray, cfg: AxisBlurCfg, seed) -> np.ndarray:
    """Separable Gaussian blur with an independently drawn sigma per axis
    (partial-voluming simulation); reflect boundary."""
    rng = _rng(seed)
    sigmas = rng.uniform(cfg.sigma_range[0], cfg.sigma_range[1], size=3)
    out = img
    for axis in range(3):
        if sigmas[axis] > 1e-8:
            out = ndimage.gaussian_filter1d(out, sigmas[axis], axis=axis, mode="reflect")
    return out.copy() if out is img else out.astype(np.float32)


def noise_inject(img: np.ndarray, cfg: NoiseCfg, seed) -> np.ndarray:
    """Add Gaussian, Poisson, or speckle noise to the non-zero voxels only;
    voxels that are exactly 0 stay exactly 0."""
    rng = _rng(seed)
    if not cfg.families:
        return img.copy()
    family = cfg.families[int(rng.integers(len(cfg.families)))]
    out = img.copy()
    mask = img > 0
    vals = out[mask]
    if family == "gaussian":
        sigma = rng.uniform(*cfg.gaussian_sigma_range)
        if sigma > 0:
            vals = vals + sigma * rng.standard_normal(vals.size)
    elif family == "poisson":
        if cfg.poisson_scale > 0:
            vals = rng.poisson(vals * cfg.poisson_scale) / cfg.poisson_scale
    elif family == "speckle":
        sigma = rng.uniform(*cfg.speckle_sigma_range)
        if sigma > 0:
            vals = vals * (1.0 + sigma * rng.standard_normal(vals.size))
    else:
        raise ValueError(f"unknown noise family {family!r}")
    out[mask] = np.clip(vals, 0.0, 1.0)
    return out.astype(np.float32)


# --- the full sequence ------------------------------------------------------

def stage_stream(seed, name: str) -> np.random.Generator:
    """The per-stage Philox stream used by apply_pipeline."""
    if isinstance(seed, np.random.SeedSequence):
        base = seed
    else:
        base = np.random.SeedSequence(int(seed))
    child = np.random.SeedSequence(entropy=base.entropy, spawn_key=(_STAGE_IDS[name],))
    return np.random.Generator(np.random.Philox(child))


def apply_pipeline(s: JointSample, cfg: AugmentConfig, seed, stop_after: str | None = None) -> JointSample:
    """Run the full augmentation sequence; returns a crop-sized sample with
    consecutively renumbered labels. Bit-identical per (input, cfg, seed).

    ``stop_after`` names a stage (see STAGE_ORDER) after which to return the
    partially augmented sample, for workflows that defer the remaining
    augmentations to training time.
    """
    if stop_after is not None and stop_after not in _STAGE_IDS:
        raise ValueError(f"unknown stage {stop_after!r}; expected one of {STAGE_ORDER}")

    def fires(name, p):
        rng = stage_stream(seed, name)
        return (rng.random() < p), rng

    for name in STAGE_ORDER:
        stage_cfg = getattr(cfg, name)
        go, rng = fires(name, stage_cfg.p)
        if go:
            if name == "crop":
                s = crop_random(s, stage_cfg.target, rng)
            elif name == "affine":
                s = affine_joint(s, stage_cfg, rng)
            elif name == "bias_field":
                s = JointSample(bias_field(s.image, stage_cfg, rng), s.labels)
            elif name == "kspace_spike":
                s = JointSample(kspace_spike(s.image, stage_cfg, rng), s.labels)
            elif name == "gibbs":
                s = JointSample(gibbs_ringing(s.image, stage_cfg, rng), s.labels)
            elif name == "sharpen":
                s = JointSample(sharpen(s.image, stage_cfg, rng), s.labels)
            elif name == "gamma":
                s = JointSample(gamma_adjust(s.image, stage_cfg, rng), s.labels)
            elif name == "cutout":
                s = JointSample(cutout(s.image, stage_cfg, rng), s.labels)
            elif name == "axis_blur":
                s = JointSample(axis_blur(s.image, stage_cfg, rng), s.labels)
            elif name == "flips":
                s = _flip(s, rng)
            elif name == "rot90":
                s = _rot90(s, rng)
            elif name == "elastic":
                s = elastic_joint(s, stage_cfg, rng)
            elif name == "edge_zero_pad":
                s = edge_zero_pad(s, stage_cfg, rng)
            elif name == "terminal_cutout":
                s = terminal_cutout(s, stage_cfg, rng)
            elif name == "noise":
                s = JointSample(noise_inject(s.image, stage_cfg, rng), s.labels)
        if stop_after == name:
            break

    return JointSample(
        np.ascontiguousarray(s.image, dtype=np.float32),
        renumber_labels(np.ascontiguousarray(s.labels)),
    )
