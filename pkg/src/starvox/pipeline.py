"""The dataset harness: deterministic parallel sample generation, volume
serialization, manifests with content digests, previews, and evaluation.

Sample i is produced entirely from streams keyed by (master_seed, i, stage
tag), so its bytes are independent of worker count and scheduling; the
manifest is written last and records the full config snapshot plus a sha256
digest of every emitted file.
"""

from __future__ import annotations

import colorsys
import hashlib
import json
import multiprocessing
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .appearance import synthesize
from .augment import STAGE_ORDER, JointSample, apply_pipeline
from .config import GeneratorConfig, config_to_dict
from .labelgen import assign_labels, density_pad_rescale, place_instances
from .metrics import MatchReport, score_curve
from .nifti import read_volume, write_volume
from .rng import seed_sequence, stream
from .star import encode, make_rays

MANIFEST_NAME = "manifest.json"


@dataclass
class Sample:
    index: int
    image: np.ndarray
    labels: np.ndarray
    encoding: np.ndarray | None
    generator_mode: str
    background_mode: str

    @property
    def n_instances(self) -> int:
        return int(self.labels.max())


def generate_sample(cfg: GeneratorConfig, index: int, stop_after: str | None = None) -> Sample:
    """One fully synthesized (image, labels) pair, optionally with its dense
    star encoding; a pure function of (cfg, index)."""
    ms = cfg.master_seed
    seeds = place_instances(cfg.labelgen, stream(ms, index, "place"))
    labels = assign_labels(seeds, cfg.labelgen, stream(ms, index, "assign"))
    labels = density_pad_rescale(labels, cfg.labelgen, stream(ms, index, "pad"))
    image, bg_mode = synthesize(
        labels, cfg.generator_mode, cfg.appearance, stream(ms, index, "appearance")
    )
    sample = apply_pipeline(
        JointSample(image, labels), cfg.augment, seed_sequence(ms, index, "augment"), stop_after
    )
    enc_channels = None
    if cfg.output.emit_encodings:
        enc = encode(sample.labels, make_rays(cfg.star.n_rays))
        enc_channels = np.concatenate([enc.dists, enc.prob[..., None]], axis=-1)
    return Sample(
        index=index,
        image=sample.image,
        labels=sample.labels,
        encoding=enc_channels,
        generator_mode=cfg.generator_mode.value,
        background_mode=bg_mode.value,
    )


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _volume_ext(cfg: GeneratorConfig) -> str:
    if cfg.output.format == "raw":
        return ".raw"
    return ".nii.gz" if cfg.output.compress else ".nii"


def _write_sample(cfg: GeneratorConfig, out_dir: Path, sample: Sample) -> dict:
    ext = _volume_ext(cfg)
    stem = f"sample_{sample.index:06d}"
    files = {}

    image_name = f"{stem}_image{ext}"
    write_volume(out_dir / image_name, sample.image.astype(np.float32))
    files["image"] = image_name

    labels_name = f"{stem}_labels{ext}"
    write_volume(out_dir / labels_name, sample.labels.astype(np.uint16))
    files["labels"] = labels_name

    if sample.encoding is not None:
        enc_name = f"{stem}_rays{ext}"
        write_volume(out_dir / enc_name, sample.encoding.astype(np.float32))
        files["encoding"] = enc_name

    record = {
        "index": sample.index,
        "generator_mode": sample.generator_mode,
        "background_mode": sample.background_mode,
        "n_instances": sample.n_instances,
        "files": files,
        "digests": {name: _sha256(out_dir / name) for name in files.values()},
    }
    if cfg.output.emit_previews:
        png = out_dir / f"{stem}_preview.png"
        _render_preview(sample.image, sample.labels, axis="z",
                        index=sample.image.shape[2] // 2, out_path=png)
        record["preview"] = png.name  # diagnostic only; excluded from digests
    return record


def _worker(args) -> dict:
    cfg, index, out_dir, stop_after = args
    try:
        sample = generate_sample(cfg, index, stop_after)
        return _write_sample(cfg, Path(out_dir), sample)
    except OSError:
        raise
    except Exception as e:  # degenerate draw: record and continue
        return {"index": index, "error": f"{type(e).__name__}: {e}"}


def generate_dataset(cfg: GeneratorConfig, out_dir=None, stop_after: str | None = None) -> dict:
    """Emit cfg.n_samples samples plus a manifest; returns the manifest.

    Per-sample failures are recorded under "failures" and skipped; the caller
    decides the exit status. IO errors abort, cleaning up any partial
    manifest.
    """
    if stop_after is not None and stop_after not in STAGE_ORDER:
        raise ValueError(f"unknown stage {stop_after!r}; expected one of {STAGE_ORDER}")
    out_dir = Path(out_dir if out_dir is not None else cfg.output.directory)
    out_dir.mkdir(parents=True, exist_ok=True)

    tasks = [(cfg, i, str(out_dir), stop_after) for i in range(cfg.n_samples)]
    if cfg.workers > 1:
        with multiprocessing.Pool(cfg.workers) as pool:
            results = pool.map(_worker, tasks)
    else:
        results = [_worker(t) for t in tasks]

    records = sorted((r for r in results if "error" not in r), key=lambda r: r["index"])
    failures = sorted((r for r in results if "error" in r), key=lambda r: r["index"])
    manifest = {
        "tool": "starvox",
        "version": __version__,
        "stop_after": stop_after,
        "config": config_to_dict(cfg),
        "samples": records,
        "failures": failures,
    }

    manifest_path = out_dir / MANIFEST_NAME
    tmp_path = out_dir / (MANIFEST_NAME + ".tmp")
    try:
        tmp_path.write_text(json.dumps(manifest, indent=2) + "\n")
        os.replace(tmp_path, manifest_path)
    except OSError:
        tmp_path.unlink(missing_ok=True)
        manifest_path.unlink(missing_ok=True)
        raise
    return manifest


def verify_manifest(manifest_path) -> list[str]:
    """Recompute file digests against a manifest; returns problem strings."""
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    base = manifest_path.parent
    problems = []
    for record in manifest.get("samples", []):
        for name, digest in record.get("digests", {}).items():
            path = base / name
            if not path.exists():
                problems.append(f"missing file: {name}")
            elif _sha256(path) != digest:
                problems.append(f"digest mismatch: {name}")
    return problems


def evaluate_files(pred_path, gt_path, out_path=None) -> MatchReport:
    """Score a predicted instance map against ground truth; optionally write
    the machine-readable report as JSON."""
    pred, _ = read_volume(pred_path)
    gt, _ = read_volume(gt_path)
    if pred.shape != gt.shape:
        raise ValueError(f"dims mismatch: pred {pred.shape} vs gt {gt.shape}")
    report = score_curve(pred.astype(np.int64), gt.astype(np.int64))
    if out_path is not None:
        Path(out_path).write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    return report


def _label_palette(n: int) -> np.ndarray:
    """Deterministic id -> RGB map (golden-angle hue stepping); 0 is black."""
    palette = np.zeros((n + 1, 3), dtype=np.uint8)
    golden = 0.6180339887498949
    for lid in range(1, n + 1):
        hue = (lid * golden) % 1.0
        r, g, b = colorsys.hsv_to_rgb(hue, 0.65, 1.0)
        palette[lid] = (int(r * 255), int(g * 255), int(b * 255))
    return palette


def _render_preview(image: np.ndarray, labels: np.ndarray, axis: str, index: int, out_path) -> None:
    from PIL import Image

    axis_num = {"x": 0, "y": 1, "z": 2}[axis]
    if not (0 <= index < image.shape[axis_num]):
        raise ValueError(f"slice index {index} out of range for axis {axis} of size {image.shape[axis_num]}")
    sl = [slice(None)] * 3
    sl[axis_num] = index
    img2d = np.clip(image[tuple(sl)], 0.0, 1.0)
    lab2d = labels[tuple(sl)]

    gray = np.repeat((img2d * 255).round().astype(np.uint8)[..., None], 3, axis=-1)
    palette = _label_palette(int(labels.max()))
    color = palette[lab2d]
    gap = np.full((gray.shape[0], 2, 3), 64, dtype=np.uint8)
    panel = np.concatenate([gray, gap, color], axis=1)
    Image.fromarray(panel).save(out_path)


def preview_sample(sample_path, axis: str = "z", index: int | None = None, out_path=None) -> Path:
    """Write a side-by-side grayscale/label PNG slice of a generated sample.

    ``sample_path`` is the image volume; the labels volume is found by the
    `_image` -> `_labels` naming convention (absent labels render black).
    """
    sample_path = Path(sample_path)
    if axis not in ("x", "y", "z"):
        raise ValueError(f"axis must be x, y, or z, got {axis!r}")
    image, _ = read_volume(sample_path)
    labels_path = Path(str(sample_path).replace("_image", "_labels"))
    if labels_path != sample_path and labels_path.exists():
        labels, _ = read_volume(labels_path)
        labels = labels.astype(np.int64)
    else:
        labels = np.zeros(image.shape, dtype=np.int64)

    axis_num = {"x": 0, "y": 1, "z": 2}[axis]
    if index is None:
        index = image.shape[axis_num] // 2
    if out_path is None:
        stem = sample_path.name.split(".")[0]
        out_path = sample_path.parent / f"{stem}_preview_{axis}{index}.png"
    _render_preview(image.astype(np.float64), labels, axis, index, out_path)
    return Path(out_path)
