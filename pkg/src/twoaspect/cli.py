"""Command-line entry point: ``twoaspect <subcommand> ...``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .model import ModelConfig


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="flat key=value config file; flags override it")
    group = parser.add_argument_group("model config")
    for f in dataclasses.fields(ModelConfig):
        flag = f"--{f.name}" if f.name in ("U", "D") else f"--{f.name.replace('_', '-')}"
        group.add_argument(flag, dest=f"cfg_{f.name}", metavar=f.name.upper(), default=None)


def config_from_args(args: argparse.Namespace) -> ModelConfig:
    config = ModelConfig()
    if args.config is not None:
        config = ModelConfig.from_text(args.config.read_text(), base=config)
    overrides = {
        f.name: getattr(args, f"cfg_{f.name}")
        for f in dataclasses.fields(ModelConfig)
        if getattr(args, f"cfg_{f.name}") is not None
    }
    return ModelConfig.from_mapping(overrides, base=config) if overrides else config


def cmd_gen_data(args) -> int:
    from .data import generate_synthetic

    man = generate_synthetic(args.n_videos, args.frames, args.seed, args.out, args.image_size, args.sentinel_fraction)
    print(f"wrote {len(man.entries)} videos to {man.path}")
    return 0


def cmd_train(args) -> int:
    from .pipeline import train

    result = train(config_from_args(args), args.dataset, args.out, resume=args.resume)
    print(f"log: {result.log_path}")
    print(f"checkpoints: {result.final_checkpoint} {result.best_checkpoint}")
    print(result.final_report.to_text(), end="")
    return 0


def cmd_evaluate(args) -> int:
    from .pipeline import evaluate

    report = evaluate(args.checkpoint, args.dataset, args.formula)
    print(report.to_text(), end="")
    if args.csv is not None:
        args.csv.write_text(",".join(report.csv_header()) + "\n" + report.to_csv_row())
    return 0


def cmd_predict(args) -> int:
    from .pipeline import predict

    print(predict(args.checkpoint, args.dataset, args.out))
    return 0


def cmd_export(args) -> int:
    from .pipeline import export_embeddings

    print(export_embeddings(args.checkpoint, args.dataset, args.out))
    return 0


def cmd_grad_check(args) -> int:
    from .verify import model_grad_check, primitive_grad_suite

    ok = True
    for name, report in primitive_grad_suite(n_points=args.points, tol=args.tol).items():
        ok &= report.passed
        print(f"{name:24s} {report}")
    report = model_grad_check(config_from_args(args), tol=args.model_tol, n_frames=2)
    ok &= report.passed
    print(f"{'full_model':24s} {report}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twoaspect", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a deterministic synthetic dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--n-videos", type=int, default=8)
    p.add_argument("--frames", type=int, default=16)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--image-size", type=int, default=32)
    p.add_argument("--sentinel-fraction", type=float, default=0.05)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model on a dataset")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--resume", type=Path)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--formula", choices=("default", "mean"))
    p.add_argument("--csv", type=Path, help="also write the report as a CSV row")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="write per-frame predictions")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("export-embeddings", help="write per-frame transformer block outputs")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("grad-check", help="finite-difference check of every primitive and the full model")
    p.add_argument("--points", type=int, default=10)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--model-tol", type=float, default=1e-3)
    _add_config_flags(p)
    p.set_defaults(func=cmd_grad_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
