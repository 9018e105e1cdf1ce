"""Rendering label maps into initial intensity volumes.

Foreground voxels of instance i draw from Normal(mu_i, sigma_i^2) with
per-image uniform (mu, sigma); backgrounds come from one of three models:
a strictly-darker plain component, an unconstrained plain component, or a
multi-channel Perlin "shapes" model whose warped channelwise argmax carves the
background into sub-regions, each filled from its own Gaussian component.
The composed image is modulated by multiplicative Perlin texture and clamped
to [0, 1]. Intensities live in [0, 1] throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .noise import PerlinSpec, perlin3, perlin_multichannel, smooth_deform_field, warp
from .rng import as_generator, derive_seed
from .volume import PadMode


class BackgroundMode(Enum):
    PLAIN_BRIGHT = "plain-bright"   # background mean strictly below all foreground means
    PLAIN_RAND = "plain-rand"       # background mean drawn like any other component
    PERLIN_SHAPES = "perlin-shapes" # textured background of warped Perlin argmax regions


class GeneratorMode(Enum):
    MIX = "mix"
    BRIGHTFG_PLAINBG = "brightfg-plainbg"
    RANDFG_PLAINBG = "randfg-plainbg"
    RANDFG_PERLINBG = "randfg-perlinbg"


_FIXED_BG = {
    GeneratorMode.BRIGHTFG_PLAINBG: BackgroundMode.PLAIN_BRIGHT,
    GeneratorMode.RANDFG_PLAINBG: BackgroundMode.PLAIN_RAND,
    GeneratorMode.RANDFG_PERLINBG: BackgroundMode.PERLIN_SHAPES,
}


@dataclass
class GmmParams:
    """n foreground (mean, std) pairs plus one background component (last)."""

    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=np.float64)
        self.stds = np.asarray(self.stds, dtype=np.float64)
        if self.means.shape != self.stds.shape or self.means.ndim != 1:
            raise ValueError("means and stds must be 1D arrays of equal length")
        if np.any(self.stds < 0):
            raise ValueError("stds must be >= 0")


@dataclass
class AppearanceConfig:
    mean_range: tuple[float, float] = (0.2, 0.9)
    std_range: tuple[float, float] = (0.01, 0.12)
    max_bg_shapes: int = 10            # B: background shape count drawn from U{1..B}
    bg_perlin: PerlinSpec = field(default_factory=lambda: PerlinSpec(lattice_period=32.0, octaves=2))
    bg_deform_control_spacing: float = 32.0
    bg_deform_max_disp: float = 10.0
    texture: PerlinSpec = field(default_factory=PerlinSpec)
    texture_strength_range: tuple[float, float] = (0.2, 0.6)


def sample_gmm_params(n: int, mode: BackgroundMode, cfg: AppearanceConfig, seed) -> GmmParams:
    """Draw n foreground components plus one background component.

    In PLAIN_BRIGHT mode the background mean is redrawn from U(0, min fg mean)
    until strictly below the foreground minimum.
    """
    if n < 1:
        raise ValueError(f"need at least one instance, got n={n}")
    lo, hi = cfg.mean_range
    if not (0 <= lo <= hi <= 1):
        raise ValueError(f"mean_range must satisfy 0 <= lo <= hi <= 1, got {cfg.mean_range}")
    slo, shi = cfg.std_range
    if not (0 <= slo <= shi):
        raise ValueError(f"std_range must satisfy 0 <= lo <= hi, got {cfg.std_range}")
    rng = as_generator(seed)

    means = rng.uniform(lo, hi, size=n + 1)
    stds = rng.uniform(slo, shi, size=n + 1)
    if mode is BackgroundMode.PLAIN_BRIGHT:
        fg_min = means[:n].min()
        bg = rng.uniform(0.0, fg_min)
        while not bg < fg_min:
            bg = rng.uniform(0.0, fg_min)
        means[n] = bg
    return GmmParams(means, stds)


def render_foreground(L: np.ndarray, params: GmmParams, seed) -> np.ndarray:
    """Per-voxel Gaussian intensities for foreground instances; background
    voxels stay 0. Clamping happens after full composition, not here."""
    n = int(L.max())
    if len(params.means) < n + 1:
        raise ValueError(f"params have {len(params.means)} components, need {n + 1}")
    rng = as_generator(seed)

    out = np.zeros(L.shape, dtype=np.float32)
    fg = L > 0
    ids = L[fg] - 1
    draws = params.means[ids] + params.stds[ids] * rng.standard_normal(ids.size)
    out[fg] = draws.astype(np.float32)
    return out


def render_background(L: np.ndarray, mode: BackgroundMode, cfg: AppearanceConfig,
                      seed, params: GmmParams) -> np.ndarray:
    """Intensities for background voxels only; foreground voxels stay 0.

    Plain modes draw from the single background component of ``params``. The
    shapes model draws b ~ U{1..B} Perlin channels, warps each with its own
    smooth deformation, splits the background by channelwise argmax, and fills
    each sub-region from its own freshly drawn Gaussian component. Sub-region
    ids are transient and never exported.
    """
    if cfg.max_bg_shapes < 1:
        raise ValueError(f"max_bg_shapes must be >= 1, got {cfg.max_bg_shapes}")
    rng = as_generator(seed)
    dims = L.shape
    bg = L == 0
    out = np.zeros(dims, dtype=np.float32)

    if mode in (BackgroundMode.PLAIN_BRIGHT, BackgroundMode.PLAIN_RAND):
        mu, sd = params.means[-1], params.stds[-1]
        out[bg] = (mu + sd * rng.standard_normal(int(bg.sum()))).astype(np.float32)
        return out

    b = int(rng.integers(1, cfg.max_bg_shapes + 1))
    spec = replace(cfg.bg_perlin, seed=derive_seed(cfg.bg_perlin.seed, "bg", int(rng.integers(2**31))))
    channels = perlin_multichannel(dims, b, spec)
    warped = np.empty((b, *dims), dtype=np.float32)
    for k in range(b):
        fld = smooth_deform_field(dims, cfg.bg_deform_control_spacing,
                                  cfg.bg_deform_max_disp, rng)
        warped[k] = warp(channels[k], fld, "trilinear", PadMode.REFLECT)
    subcat = np.argmax(warped, axis=0)

    mus = rng.uniform(cfg.mean_range[0], cfg.mean_range[1], size=b)
    sds = rng.uniform(cfg.std_range[0], cfg.std_range[1], size=b)
    ids = subcat[bg]
    out[bg] = (mus[ids] + sds[ids] * rng.standard_normal(int(bg.sum()))).astype(np.float32)
    return out


def modulate_texture(img: np.ndarray, spec: PerlinSpec, strength: float) -> np.ndarray:
    """Multiplicative Perlin texture: img * (1 + strength * p), clamped to [0, 1]."""
    if not (0.0 <= strength <= 1.0):
        raise ValueError(f"strength must be in [0, 1], got {strength}")
    if strength == 0.0:
        return img.copy()
    p = perlin3(img.shape, spec)
    return np.clip(img * (1.0 + strength * p), 0.0, 1.0).astype(np.float32)


def synthesize(L: np.ndarray, mode: GeneratorMode, cfg: AppearanceConfig,
               seed) -> tuple[np.ndarray, BackgroundMode]:
    """Render g(L) for a generator mode; returns (image, background mode drawn).

    MIX picks one of the three background models uniformly per call. Output
    voxels all lie in [0, 1]. Deterministic per (L, mode, cfg, seed).
    """
    rng = as_generator(seed)
    if mode is GeneratorMode.MIX:
        bg_mode = list(BackgroundMode)[int(rng.integers(3))]
    else:
        bg_mode = _FIXED_BG[mode]

    n = max(int(L.max()), 1)
    params = sample_gmm_params(n, bg_mode, cfg, rng)
    img = render_foreground(L, params, rng)
    img += render_background(L, bg_mode, cfg, rng, params)

    strength = float(rng.uniform(*cfg.texture_strength_range))
    tex_seed = derive_seed(cfg.texture.seed, "texture", int(rng.integers(2**31)))
    img = modulate_texture(img, replace(cfg.texture, seed=tex_seed), strength)
    return np.clip(img, 0.0, 1.0), bg_mode
