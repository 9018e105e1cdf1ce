#!/usr/bin/env python3
"""Render a gallery PNG comparing the four generator modes on one label map:
rows are modes, columns are (label slice, raw image, augmented image)."""

import argparse

import numpy as np
from PIL import Image

from starvox.appearance import AppearanceConfig, GeneratorMode, synthesize
from starvox.augment import AugmentConfig, JointSample, apply_pipeline
from starvox.labelgen import LabelGenConfig, assign_labels, density_pad_rescale, place_instances
from starvox.pipeline import _label_palette
from starvox.rng import seed_sequence, stream


def mid_slice(vol):
    return vol[:, :, vol.shape[2] // 2]


def to_gray(img2d):
    return np.repeat((np.clip(img2d, 0, 1) * 255).astype(np.uint8)[..., None], 3, -1)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="mode_gallery.png")
    args = ap.parse_args()

    lg = LabelGenConfig()
    seeds = place_instances(lg, stream(args.seed, 0, "place"))
    labels = assign_labels(seeds, lg, stream(args.seed, 0, "assign"))
    labels = density_pad_rescale(labels, lg, stream(args.seed, 0, "pad"))
    palette = _label_palette(int(labels.max()))

    rows = []
    for mode in GeneratorMode:
        img, bg = synthesize(labels, mode, AppearanceConfig(), stream(args.seed, 1, mode.value))
        aug = apply_pipeline(
            JointSample(img, labels), AugmentConfig(), seed_sequence(args.seed, 2, mode.value)
        )
        lab2d = palette[mid_slice(labels)]
        pane = np.concatenate(
            [lab2d, to_gray(mid_slice(img)), np.kron(to_gray(mid_slice(aug.image)), np.ones((2, 2, 1), np.uint8))],
            axis=1,
        )
        rows.append(pane)
        print(f"{mode.value:<18} background={bg.value:<14} instances={labels.max()}")

    gallery = np.concatenate(rows, axis=0)
    Image.fromarray(gallery).save(args.out)
    print(f"gallery written to {args.out}")


if __name__ == "__main__":
    main()
