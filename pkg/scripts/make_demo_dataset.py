#!/usr/bin/env python3
"""Generate a small demo dataset with previews and star encodings enabled,
then print a per-sample summary. Handy as a first smoke run after install."""

import argparse
import json
from dataclasses import replace
from pathlib import Path

from starvox.config import GeneratorConfig
from starvox.pipeline import generate_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="demo_dataset")
    ap.add_argument("--samples", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    cfg = GeneratorConfig()
    cfg = replace(
        cfg,
        master_seed=args.seed,
        n_samples=args.samples,
        workers=args.workers,
        output=replace(cfg.output, directory=args.out, emit_previews=True, emit_encodings=True),
    )
    manifest = generate_dataset(cfg)

    print(f"wrote {len(manifest['samples'])} samples to {args.out}/")
    for rec in manifest["samples"]:
        print(
            f"  sample {rec['index']:3d}: bg={rec['background_mode']:<14} "
            f"instances={rec['n_instances']:3d}  {rec['files']['image']}"
        )
    print(f"manifest: {Path(args.out) / 'manifest.json'}")
    print(json.dumps(manifest["config"]["augment"]["crop"], indent=2))


if __name__ == "__main__":
    main()
