"""Command line front end.

``liouville-bubbles <command> --config FILE [--out DIR] [--threads K] [--dry-run] [--oracle]``

Exit status is 0 on success, 2 when an input violates an invariant and 3
when a numerical stage fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from threadpoolctl import threadpool_limits

from .config import load_config
from .exceptions import NumericalError, ValidationError
from .workflow import Workflow, stage

COMMANDS = ("green", "profile", "reduce", "quantities", "assemble", "verify", "pipeline")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="liouville-bubbles",
                                description="Multi-bubble approximate solutions of Liouville systems on a torus.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="experiment configuration file")
    p.add_argument("--out", default=None, help="output directory (default: out-<command>)")
    p.add_argument("--threads", type=int, default=1, help="cap on BLAS/FFT worker threads")
    p.add_argument("--dry-run", action="store_true", help="validate and print the resolved plan")
    p.add_argument("--oracle", action="store_true", help="also run brute-force cross-checks")
    p.add_argument("-v", "--verbose", action="store_true", help="log every stage to stderr")
    return p


def run(args) -> int:
    with stage("config"):
        cfg = load_config(args.config)
    if args.dry_run:
        plan = {"command": args.command, "out": args.out, "threads": args.threads, "oracle": args.oracle,
                "config": cfg.plan()}
        sys.stdout.write(json.dumps(plan, indent=2, sort_keys=True) + "\n")
        return EXIT_OK
    out = args.out if args.out is not None else f"out-{args.command}"
    wf = Workflow(cfg, out_dir=out, oracle=args.oracle)
    if args.command == "green":
        wf.run_green()
    elif args.command == "profile":
        wf.run_profile()
    elif args.command == "reduce":
        wf.run_reduce()
    elif args.command == "quantities":
        wf.run_quantities()
    elif args.command == "assemble":
        wf.run_assemble(write_fields=True)
    elif args.command == "verify":
        wf.run_verify()
    else:
        sys.stdout.write(wf.run_pipeline())
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.threads < 1:
        sys.stderr.write("error: --threads must be a positive integer\n")
        return EXIT_VALIDATION
    try:
        with threadpool_limits(limits=args.threads):
            return run(args)
    except ValidationError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_VALIDATION
    except NumericalError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
