"""Command-line front end: ``tsb {generate,train,evaluate,predict,ablate}``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .errors import TsbError
from .pipeline import COMMANDS, RunConfig, load_config, mode_override, run
from .specgen import MODES


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tsb", description="Multi-channel spectrum forecasting with TSB.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="JSON run configuration; flags override its fields")
    parser.add_argument("--seed", type=int, help="global seed (scenario, initialization, shuffling)")
    parser.add_argument("--fold", type=int, help="fold index in [0, 5)")
    parser.add_argument("--mode", choices=MODES, help="jammer schedule")
    parser.add_argument("--horizon", type=int, choices=(48, 96), help="prediction horizon M")
    parser.add_argument("--input-len", type=int, choices=(96, 128), help="encoder input length T")
    parser.add_argument("--optimizer", choices=("adam", "sgdm", "sgd"))
    parser.add_argument("--out", help="output directory")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.fold is not None:
        cfg = replace(cfg, fold=args.fold)
    if args.mode is not None:
        cfg = mode_override(cfg, args.mode)
    model = dict(cfg.model)
    if args.horizon is not None:
        model["horizon"] = args.horizon
    if args.input_len is not None:
        model["input_len"] = args.input_len
    if model != cfg.model:
        cfg = replace(cfg, model=model)
    if args.optimizer is not None:
        cfg = replace(cfg, train=replace(cfg.train, optimizer=args.optimizer))
    if args.out is not None:
        cfg = replace(cfg, out=args.out)
    return cfg


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = resolve_config(args)
        result = run(args.command, cfg)
    except FileNotFoundError as exc:
        print(f"tsb: error: {exc}", file=sys.stderr)
        return 3
    except TsbError as exc:
        print(f"tsb: error: {exc}", file=sys.stderr)
        return 2
    paths = result if isinstance(result, tuple) else (result,)
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
