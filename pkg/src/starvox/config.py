"""Generator configuration: a nested dataclass tree, loadable from YAML.

Every stochastic range and per-stage probability of the generative model and
the augmentation sequence is addressable by key. Unknown keys are errors;
absent keys keep their documented defaults; validation failures name the
offending key.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, replace

import yaml

from .appearance import AppearanceConfig, GeneratorMode
from .augment import AugmentConfig
from .labelgen import LabelGenConfig
from .noise import PerlinSpec
from .volume import PadMode


class ConfigError(ValueError):
    """A configuration problem, carrying the offending key in the message."""


@dataclass
class StarConfig:
    n_rays: int = 96
    prob_thresh: float = 0.5
    nms_thresh: float = 0.3
    grid_step: int = 2


@dataclass
class OutputConfig:
    directory: str = "dataset"
    format: str = "nifti"          # "nifti" or "raw"
    compress: bool = True          # gzip NIfTI files
    emit_encodings: bool = False
    emit_previews: bool = False


@dataclass
class GeneratorConfig:
    master_seed: int = 0
    n_samples: int = 1
    generator_mode: GeneratorMode = GeneratorMode.MIX
    workers: int = 1
    labelgen: LabelGenConfig = field(default_factory=LabelGenConfig)
    appearance: AppearanceConfig = field(default_factory=AppearanceConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    star: StarConfig = field(default_factory=StarConfig)
    output: OutputConfig = field(default_factory=OutputConfig)


def _coerce_leaf(key: str, current, value, path: str):
    if key == "lattice_period":
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        if isinstance(value, (list, tuple)) and len(value) == 3:
            return tuple(float(v) for v in value)
        raise ConfigError(f"{path}: expected a number or 3-element list, got {value!r}")
    if key == "generator_mode":
        try:
            return GeneratorMode(value)
        except ValueError:
            raise ConfigError(
                f"{path}: expected one of {[m.value for m in GeneratorMode]}, got {value!r}"
            ) from None
    if key == "pad_mode":
        if value is None:
            return None
        try:
            return PadMode(value)
        except ValueError:
            raise ConfigError(
                f"{path}: expected one of {[m.value for m in PadMode]} or null, got {value!r}"
            ) from None
    if isinstance(current, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean, got {value!r}")
        return value
    if isinstance(current, int) and not isinstance(current, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return int(value)
    if isinstance(current, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if isinstance(current, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if isinstance(current, tuple):
        if isinstance(value, (int, float)) and key == "lattice_period":
            return float(value)
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        return tuple(value)
    if current is None or isinstance(current, (int, float)):
        return value
    raise ConfigError(f"{path}: unsupported value {value!r}")


def _merge(obj, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(obj)}
    updates = {}
    for key, value in data.items():
        kpath = f"{path}{key}"
        if key not in names:
            raise ConfigError(f"unknown config key: {kpath}")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current) and isinstance(value, dict):
            updates[key] = _merge(current, value, kpath + ".")
        elif dataclasses.is_dataclass(current):
            raise ConfigError(f"{kpath}: expected a mapping of settings")
        else:
            updates[key] = _coerce_leaf(key, current, value, kpath)
    return replace(obj, **updates)


def _check(cond: bool, key: str, message: str):
    if not cond:
        raise ConfigError(f"{key}: {message}")


def _check_prob(value, key: str):
    _check(0.0 <= value <= 1.0, key, f"must be in [0, 1], got {value}")


def _check_range(rng_pair, key: str, lo=None, hi=None):
    _check(len(rng_pair) == 2, key, f"must be a [lo, hi] pair, got {rng_pair}")
    a, b = rng_pair
    _check(a <= b, key, f"lo must be <= hi, got {rng_pair}")
    if lo is not None:
        _check(a >= lo, key, f"must be >= {lo}, got {rng_pair}")
    if hi is not None:
        _check(b <= hi, key, f"must be <= {hi}, got {rng_pair}")


def _check_perlin(spec: PerlinSpec, key: str):
    try:
        spec.validate()
    except ValueError as e:
        raise ConfigError(f"{key}: {e}") from None


def validate_config(cfg: GeneratorConfig) -> None:
    _check(cfg.master_seed >= 0, "master_seed", f"must be >= 0, got {cfg.master_seed}")
    _check(cfg.n_samples >= 1, "n_samples", f"must be >= 1, got {cfg.n_samples}")
    _check(cfg.workers >= 1, "workers", f"must be >= 1, got {cfg.workers}")

    lg = cfg.labelgen
    _check(all(g >= 1 for g in lg.grid_shape), "labelgen.grid_shape", "axes must be >= 1")
    _check(lg.base_radius > 0, "labelgen.base_radius", f"must be > 0, got {lg.base_radius}")
    _check(lg.jitter_frac >= 0, "labelgen.jitter_frac", f"must be >= 0, got {lg.jitter_frac}")
    _check_range(lg.scale_range, "labelgen.scale_range", lo=0)
    _check(lg.scale_range[0] > 0, "labelgen.scale_range", "lo must be > 0")
    _check(
        0 <= lg.removal_frac_max <= 1.0 / 3.0 + 1e-12,
        "labelgen.removal_frac_max",
        f"must be in [0, 1/3], got {lg.removal_frac_max}",
    )
    _check(lg.noise_gain >= 0, "labelgen.noise_gain", f"must be >= 0, got {lg.noise_gain}")
    _check(all(d >= 1 for d in lg.canvas_dims), "labelgen.canvas_dims", "axes must be >= 1")
    _check(all(d >= 1 for d in lg.output_dims), "labelgen.output_dims", "axes must be >= 1")
    _check_range(lg.pad_frac_range, "labelgen.pad_frac_range", lo=0)
    _check_perlin(lg.perlin_spec, "labelgen.perlin_spec")

    ap = cfg.appearance
    _check_range(ap.mean_range, "appearance.mean_range", lo=0, hi=1)
    _check_range(ap.std_range, "appearance.std_range", lo=0)
    _check(ap.max_bg_shapes >= 1, "appearance.max_bg_shapes", f"must be >= 1, got {ap.max_bg_shapes}")
    _check(ap.bg_deform_control_spacing >= 2, "appearance.bg_deform_control_spacing", "must be >= 2")
    _check(ap.bg_deform_max_disp >= 0, "appearance.bg_deform_max_disp", "must be >= 0")
    _check_range(ap.texture_strength_range, "appearance.texture_strength_range", lo=0, hi=1)
    _check_perlin(ap.bg_perlin, "appearance.bg_perlin")
    _check_perlin(ap.texture, "appearance.texture")

    for stage in dataclasses.fields(cfg.augment):
        stage_cfg = getattr(cfg.augment, stage.name)
        _check_prob(stage_cfg.p, f"augment.{stage.name}.p")
    ag = cfg.augment
    _check(all(t >= 1 for t in ag.crop.target), "augment.crop.target", "axes must be >= 1")
    _check_range(ag.affine.scale_range, "augment.affine.scale_range", lo=1e-6)
    _check(ag.bias_field.coeff >= 0, "augment.bias_field.coeff", "must be >= 0")
    _check(ag.bias_field.order >= 0, "augment.bias_field.order", "must be >= 0")
    _check(ag.kspace_spike.max_spikes >= 0, "augment.kspace_spike.max_spikes", "must be >= 0")
    _check_range(ag.gibbs.cutoff_range, "augment.gibbs.cutoff_range", lo=0, hi=1)
    _check(ag.gibbs.cutoff_range[0] > 0, "augment.gibbs.cutoff_range", "lo must be > 0")
    _check_range(ag.axis_blur.sigma_range, "augment.axis_blur.sigma_range", lo=0)
    _check(ag.elastic.control_spacing >= 2, "augment.elastic.control_spacing", "must be >= 2")
    _check(ag.elastic.max_disp >= 0, "augment.elastic.max_disp", "must be >= 0")
    _check(0 <= ag.edge_zero_pad.max_width_frac <= 0.5, "augment.edge_zero_pad.max_width_frac", "must be in [0, 0.5]")
    _check_range(ag.noise.gaussian_sigma_range, "augment.noise.gaussian_sigma_range", lo=0)
    _check_range(ag.noise.speckle_sigma_range, "augment.noise.speckle_sigma_range", lo=0)
    for fam in ag.noise.families:
        _check(fam in ("gaussian", "poisson", "speckle"), "augment.noise.families", f"unknown family {fam!r}")

    st = cfg.star
    _check(st.n_rays >= 4, "star.n_rays", f"must be >= 4, got {st.n_rays}")
    _check_prob(st.prob_thresh, "star.prob_thresh")
    _check_prob(st.nms_thresh, "star.nms_thresh")
    _check(st.grid_step >= 1, "star.grid_step", f"must be >= 1, got {st.grid_step}")

    _check(cfg.output.format in ("nifti", "raw"), "output.format", f"must be 'nifti' or 'raw', got {cfg.output.format!r}")


def config_to_dict(obj) -> dict:
    """Recursive plain-dict form (enums to values, tuples to lists)."""
    out = {}
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        if dataclasses.is_dataclass(v):
            out[f.name] = config_to_dict(v)
        elif isinstance(v, (GeneratorMode, PadMode)):
            out[f.name] = v.value
        elif isinstance(v, tuple):
            out[f.name] = list(v)
        else:
            out[f.name] = v
    return out


def config_from_dict(data: dict) -> GeneratorConfig:
    cfg = _merge(GeneratorConfig(), data or {}, "")
    validate_config(cfg)
    return cfg


def load_config(path) -> GeneratorConfig:
    """Parse and validate a YAML config file; an empty file gives defaults."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as e:
            raise ConfigError(f"could not parse {path}: {e}") from None
    if data is None:
        data = {}
    return config_from_dict(data)


def dump_config(cfg: GeneratorConfig) -> str:
    """YAML form; load_config of this text reproduces an equal config."""
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)
