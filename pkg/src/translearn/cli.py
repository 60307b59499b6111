"""Command-line entry point.

Subcommands: gp-exp, safe-bo, theory (each takes a TOML config), and
retrieve (flag-driven).  The worker-pool size for seed-level parallelism
comes from the TRANSLEARN_WORKERS environment variable (default 1).
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import ConfigError, load_config
from .experiments import retrieve, run_gp_experiment, run_safebo_experiment, run_theory

WORKERS_ENV = "TRANSLEARN_WORKERS"


def _workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="translearn",
        description="Transductive active learning experiments over GP models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for cmd, help_text in (
        ("gp-exp", "run a GP active-learning experiment"),
        ("safe-bo", "run a safe Bayesian optimization experiment"),
        ("theory", "emit capacity and excess-variance instruments"),
    ):
        p = sub.add_parser(cmd, help=help_text)
        p.add_argument("config", help="path to the TOML experiment config")
        p.add_argument("--output", default=None, help="override the output directory")

    r = sub.add_parser("retrieve", help="select informative candidates for targets")
    r.add_argument("--candidates", required=True, help="candidate embedding file")
    r.add_argument("--targets", required=True, help="target embedding file")
    r.add_argument(
        "--rule",
        default="itl",
        choices=["itl", "vtl", "ctl", "mmitl", "unsa", "cosine"],
    )
    r.add_argument("--batch", type=int, default=10, help="batch size per round")
    r.add_argument("--rounds", type=int, default=1)
    r.add_argument("--noise-var", type=float, default=1.0, dest="noise_var")
    r.add_argument("--mode", default="bace", choices=["bace", "topb"])
    r.add_argument("--output", default=None, help="selection CSV path (default stdout)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    workers = _workers()
    try:
        if args.command == "gp-exp":
            run_gp_experiment(load_config(args.config, "gp"), args.output, workers)
        elif args.command == "safe-bo":
            run_safebo_experiment(load_config(args.config, "safebo"), args.output, workers)
        elif args.command == "theory":
            run_theory(load_config(args.config, "theory"), args.output, workers)
        elif args.command == "retrieve":
            rows = retrieve(
                args.candidates,
                args.targets,
                rule=args.rule,
                batch_size=args.batch,
                rounds=args.rounds,
                noise_var=args.noise_var,
                mode=args.mode,
                output_path=args.output,
            )
            if args.output is None:
                print("round,position,candidate_row,id,score")
                for row in rows:
                    print(",".join(str(v) for v in row))
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
