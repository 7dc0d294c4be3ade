"""Experiment runner CLI: `run`, `validate`, and `list-presets` subcommands.

Exit code 0 means the run completed and every output file was written;
config problems exit 2, runtime failures exit 1, both with a diagnostic on
stderr. Plotting is out of scope: metrics.csv is the contract.
"""

from __future__ import annotations

import argparse
import sys

from .config import PRESETS, SimConfig, load_preset, parse_config
from .errors import CwbsimError, InvalidConfigError
from .reporting import emit_reports
from .sim import run_ensemble


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cwbsim",
        description="Social-media dynamics simulator with a collective well-being metric engine.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute an experiment and emit reports")
    src = run_p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=sorted(PRESETS), help="named experiment preset")
    src.add_argument("--config", help="path to a TOML config file")
    run_p.add_argument("--seed", type=int, default=None, help="override the master seed")
    run_p.add_argument("--out", default="cwbsim-out", help="output directory")
    run_p.add_argument(
        "--workers", type=int, default=None, help="parallel ensemble workers (default: config)"
    )
    run_p.add_argument(
        "--dump-graph", action="store_true", help="also dump the final graph as an edge list"
    )

    val_p = sub.add_parser("validate", help="parse and validate a config file")
    val_p.add_argument("--config", required=True, help="path to a TOML config file")

    sub.add_parser("list-presets", help="list available presets")
    return parser


def _execute(cfg: SimConfig, out_dir: str) -> None:
    arm_stats = []
    for arm, arm_cfg in cfg.arms():
        print(f"running arm {arm!r}: {cfg.runs} runs x {cfg.steps} steps ...", flush=True)
        stats = run_ensemble(arm_cfg, cfg.master_seed, cfg.runs, workers=cfg.workers)
        arm_stats.append((arm, stats))
    written = emit_reports(arm_stats, cfg, out_dir)
    for path in written:
        print(f"wrote {path}")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)

    if args.command == "list-presets":
        for name in sorted(PRESETS):
            print(f"{name}: {PRESETS[name]}")
        return 0

    if args.command == "validate":
        try:
            parse_config(args.config)
        except InvalidConfigError as exc:
            print(f"invalid config: {exc}", file=sys.stderr)
            return 2
        print("config ok")
        return 0

    # run
    try:
        if args.preset:
            cells = load_preset(args.preset)
        else:
            cells = [("", parse_config(args.config))]
    except InvalidConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2

    try:
        for label, cfg in cells:
            if args.seed is not None:
                cfg.master_seed = args.seed
            if args.workers is not None:
                cfg.workers = args.workers
            if args.dump_graph:
                cfg.dump_graph = True
            cfg.validate()
            out_dir = args.out if not label else f"{args.out}/{label}"
            _execute(cfg, out_dir)
    except InvalidConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    except CwbsimError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
