"""Command-line entry point: ``libivae {gen,train,eval,report,sweep-fig1,run}``.

Exit codes: 0 success, 1 failed ``--check``, 2 usage or IO error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .experiment import (ConfigError, ExperimentConfig, PipelineError, cmd_eval, cmd_gen, cmd_report,
                         cmd_sweep_fig1, cmd_train, save_config)


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="JSON experiment config (see experiment.schema.json)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--epochs", type=int, help="training epochs per run")
    scale = p.add_mutually_exclusive_group()
    scale.add_argument("--desk", dest="scale", action="store_const", const="desk", help="desk-scale preset")
    scale.add_argument("--paper", dest="scale", action="store_const", const="paper", help="paper-scale preset")
    p.add_argument("--kinds", nargs="+", help="worlds to include")
    p.add_argument("--methods", nargs="+", help="methods to include")
    p.add_argument("--replicates", type=int, help="datasets per world")
    p.add_argument("--restarts", type=int, help="restarts per grid point")
    p.add_argument("--jobs", type=int, help="worker processes for training")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="libivae", description="Synthetic VAE benchmark: LiBI and baselines.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()
    sub.add_parser("gen", parents=[common], help="generate replicate datasets")
    p = sub.add_parser("train", parents=[common], help="train every (dataset, method, grid point, restart)")
    p.add_argument("--resume", action="store_true", help="skip runs whose record already exists")
    sub.add_parser("eval", parents=[common], help="select per restart set and evaluate")
    p = sub.add_parser("report", parents=[common], help="write table.csv and figure files")
    p.add_argument("--check", action="store_true", help="exit 1 unless the expected orderings hold")
    p = sub.add_parser("sweep-fig1", parents=[common], help="posterior-matching and MI grids over B")
    p.add_argument("--grid", type=int, default=20, help="cells per axis")
    p = sub.add_parser("run", parents=[common], help="gen, train, eval and report in one go")
    p.add_argument("--resume", action="store_true")
    p.add_argument("--check", action="store_true")
    return parser


def resolve_config(args) -> ExperimentConfig:
    overrides = {"out": args.out, "seed": args.seed, "epochs": args.epochs, "kinds": args.kinds,
                 "methods": args.methods, "replicates": args.replicates, "restarts": args.restarts,
                 "jobs": args.jobs}
    if args.config is not None:
        return ExperimentConfig.load(args.config, args.scale, overrides)
    saved = Path(args.out or "results") / "config.json"
    if args.command not in ("gen", "run", "sweep-fig1") and saved.exists():
        return ExperimentConfig.load(saved, args.scale, overrides)
    return ExperimentConfig.resolve(args.scale, None, overrides)


def _report(cfg, check: bool) -> int:
    table, checks = cmd_report(cfg, check=check)
    print(f"wrote {table}")
    if not check:
        return 0
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return 0 if all(ok for _, ok, _ in checks) else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "gen":
            paths = cmd_gen(cfg)
            print(f"wrote {len(paths)} datasets to {Path(cfg.out) / 'datasets'}")
            return 0
        if args.command == "train":
            save_config(cfg)
            paths = cmd_train(cfg, resume=args.resume)
            print(f"{len(paths)} run records under {Path(cfg.out) / 'runs'}")
            return 0
        if args.command == "eval":
            paths = cmd_eval(cfg)
            print(f"wrote {len(paths)} evaluation files")
            return 0
        if args.command == "report":
            return _report(cfg, args.check)
        if args.command == "sweep-fig1":
            fig = cmd_sweep_fig1(cfg, args.grid)
            print(f"argmin cell {fig['argmin']}")
            return 0
        cmd_gen(cfg)
        cmd_train(cfg, resume=args.resume)
        cmd_eval(cfg)
        return _report(cfg, args.check)
    except (ConfigError, PipelineError, OSError) as exc:
        print(f"libivae: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
