"""Command line entry point: ``metagnn run ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .bench import MODELS, ExperimentConfig, format_csv, format_markdown, run_experiment

# flag name -> (ExperimentConfig field, type)
FLAGS = {
    "dataset": ("dataset", str),
    "content": ("content", str),
    "cites": ("cites", str),
    "model": ("models", str),
    "k": ("k", int),
    "folds": ("folds", int),
    "selections": ("selections", int),
    "order": ("order", str),
    "alpha1": ("alpha1", float),
    "alpha2": ("alpha2", float),
    "batch": ("batch", int),
    "iters": ("iters", int),
    "inner-steps": ("inner_steps", int),
    "query-size": ("query_size", int),
    "way": ("way", int),
    "hidden": ("hidden", int),
    "hops": ("hops", int),
    "baseline-epochs": ("baseline_epochs", int),
    "baseline-lr": ("baseline_lr", float),
    "seed": ("seed", int),
    "out": ("out", str),
    "format": ("format", str),
}


def read_config_file(path: str) -> dict[str, str]:
    """Flat ``key = value`` (or ``key: value``) lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        sep = "=" if "=" in line else ":"
        if sep not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split(sep, 1))
        key = key.lstrip("-").replace("_", "-")
        if key not in FLAGS:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metagnn",
                                     description="Few-shot node classification benchmark.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the fold x selection protocol")
    run.add_argument("--config", help="flat key-value file supplying any flag")
    for flag, (_, typ) in FLAGS.items():
        run.add_argument(f"--{flag}", type=typ, default=None)
    run.epilog = f"models: {', '.join(MODELS)} (comma-separate to compare several)"
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    merged = {}
    if args.config:
        for key, value in read_config_file(args.config).items():
            merged[key] = FLAGS[key][1](value)
    for flag in FLAGS:
        value = getattr(args, flag.replace("-", "_"))
        if value is not None:
            merged[flag] = value
    missing = [f for f in ("content", "cites") if f not in merged]
    if missing:
        raise ValueError(f"missing required setting(s): {', '.join('--' + m for m in missing)}")
    return ExperimentConfig(**{FLAGS[k][0]: v for k, v in merged.items()})


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        config = config_from_args(args)

        def sink(model, fold, p):
            if args.verbose and (p.iteration % 50 == 0):
                print(f"{model} fold={fold} {p.line()}", file=sys.stderr)

        table = run_experiment(config, sink=sink)
    except Exception as exc:  # every failure becomes a message and exit code 1
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if not config.out:
        sys.stdout.write(format_csv(table) if config.format == "csv" else format_markdown(table))
    return 0


if __name__ == "__main__":
    sys.exit(main())
