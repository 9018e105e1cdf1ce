"""Command-line interface.

Subcommands: generate (synthesize a dataset), evaluate (score predicted vs
ground-truth instance maps), preview (export a PNG slice), verify (check
manifest digests).

Exit codes: 0 success, 1 usage/config error, 2 partial generation failure or
digest mismatch, 3 IO error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .appearance import GeneratorMode
from .augment import STAGE_ORDER
from .config import ConfigError, GeneratorConfig, load_config, validate_config
from .pipeline import evaluate_files, generate_dataset, preview_sample, verify_manifest


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="starvox",
        description="Synthesize domain-randomized 3D instance-segmentation training volumes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="generate a dataset of (image, label) volumes")
    gen.add_argument("--config", help="YAML config file (defaults apply when omitted)")
    gen.add_argument("--seed", type=int, help="override master_seed")
    gen.add_argument("--samples", type=int, help="override n_samples")
    gen.add_argument("--workers", type=int, help="override worker count")
    gen.add_argument("--out", help="override output directory")
    gen.add_argument(
        "--mode",
        choices=[m.value for m in GeneratorMode],
        help="override generator mode",
    )
    gen.add_argument(
        "--stop-after",
        choices=STAGE_ORDER,
        help="emit samples with the augmentation sequence stopped after this stage",
    )

    ev = sub.add_parser("evaluate", help="score predicted vs ground-truth instance volumes")
    ev.add_argument("--pred", required=True)
    ev.add_argument("--gt", required=True)
    ev.add_argument("--out", help="write the machine-readable JSON report here")

    pv = sub.add_parser("preview", help="export a side-by-side image/label PNG slice")
    pv.add_argument("--sample", required=True, help="path to a sample image volume")
    pv.add_argument("--axis", choices=["x", "y", "z"], default="z")
    pv.add_argument("--index", type=int, help="slice index (default: middle)")
    pv.add_argument("--out", help="output PNG path")

    vf = sub.add_parser("verify", help="check dataset files against manifest digests")
    vf.add_argument("--manifest", required=True)
    return parser


def _cmd_generate(args) -> int:
    cfg = load_config(args.config) if args.config else GeneratorConfig()
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    if args.samples is not None:
        cfg = replace(cfg, n_samples=args.samples)
    if args.workers is not None:
        cfg = replace(cfg, workers=args.workers)
    if args.mode is not None:
        cfg = replace(cfg, generator_mode=GeneratorMode(args.mode))
    validate_config(cfg)
    manifest = generate_dataset(cfg, out_dir=args.out, stop_after=args.stop_after)
    n_ok = len(manifest["samples"])
    n_bad = len(manifest["failures"])
    print(f"generated {n_ok} samples ({n_bad} failures) in {args.out or cfg.output.directory}")
    for failure in manifest["failures"]:
        print(f"  sample {failure['index']} failed: {failure['error']}", file=sys.stderr)
    return 2 if n_bad else 0


def _cmd_evaluate(args) -> int:
    report = evaluate_files(args.pred, args.gt, args.out)
    print(report.format_table())
    if args.out:
        print(f"report written to {args.out}")
    return 0


def _cmd_preview(args) -> int:
    out = preview_sample(args.sample, axis=args.axis, index=args.index, out_path=args.out)
    print(f"preview written to {out}")
    return 0


def _cmd_verify(args) -> int:
    problems = verify_manifest(args.manifest)
    if problems:
        for p in problems:
            print(p, file=sys.stderr)
        return 2
    print("all digests match")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 1

    commands = {
        "generate": _cmd_generate,
        "evaluate": _cmd_evaluate,
        "preview": _cmd_preview,
        "verify": _cmd_verify,
    }
    try:
        return commands[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
