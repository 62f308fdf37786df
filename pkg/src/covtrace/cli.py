"""Command line front end.

Exit codes: 0 on success, 2 when a scenario fails to parse or validate,
3 when --strict is set and a verdict in the result comes out false.
The COVTRACE_LOG environment variable (off, info, debug) controls logging.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time

from .errors import ConfigError
from .runner import load_config, run_scenario, run_sweep, write_outputs

log = logging.getLogger("covtrace")


def _configure_logging():
    level = os.environ.get("COVTRACE_LOG", "off").strip().lower()
    if level in ("", "off", "0", "none"):
        logging.disable(logging.CRITICAL)
        return
    numeric = {"info": logging.INFO, "debug": logging.DEBUG}.get(level)
    if numeric is None:
        numeric = logging.INFO
    logging.basicConfig(
        level=numeric, format="%(asctime)s %(name)s %(levelname)s %(message)s"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="covtrace",
        description="Run collapse-free measurement-chain and covariant-trace scenarios.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute one scenario file")
    run_p.add_argument("--scenario", required=True, help="scenario file path or bundled name")
    run_p.add_argument("--out", required=True, help="output directory")
    run_p.add_argument("--format", choices=("json", "csv", "both"), default="both")
    run_p.add_argument(
        "--strict",
        action="store_true",
        help="exit with status 3 if any verdict fails",
    )
    run_p.add_argument(
        "--tol",
        type=float,
        default=None,
        help="override the default tolerance used by verdict checks",
    )

    sweep_p = sub.add_parser("sweep", help="run randomized trials of a chain scenario")
    sweep_p.add_argument("--scenario", required=True, help="scenario file path or bundled name")
    sweep_p.add_argument("--trials", required=True, type=int, help="number of random trials")
    sweep_p.add_argument("--seed", required=True, type=int, help="base seed; trial k uses seed+k")
    sweep_p.add_argument("--out", required=True, help="output directory")
    sweep_p.add_argument("--format", choices=("json", "csv", "both"), default="json")
    sweep_p.add_argument("--strict", action="store_true")
    sweep_p.add_argument("--tol", type=float, default=None)
    return parser


def main(argv=None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    started = time.time()
    try:
        config = load_config(args.scenario)
        if args.command == "run":
            bundle = run_scenario(config, tol=args.tol)
        else:
            bundle = run_sweep(config, trials=args.trials, seed=args.seed, tol=args.tol)
    except ConfigError as exc:
        where = f" (field: {exc.field})" if exc.field else ""
        print(f"covtrace: invalid scenario{where}: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"covtrace: scenario failed validation: {exc}", file=sys.stderr)
        return 2

    meta = {
        "tool": "covtrace",
        "version": __import__("covtrace").__version__,
        "command": args.command,
        "scenario": str(args.scenario),
        "label": bundle.label,
        "started_at": started,
        "duration_seconds": time.time() - started,
    }
    written = write_outputs(bundle, args.out, fmt=args.format, meta=meta)
    for path in written:
        print(path)

    failed = bundle.failed_verdicts
    if failed:
        print("failed verdicts: " + ", ".join(failed), file=sys.stderr)
        if args.strict:
            return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
