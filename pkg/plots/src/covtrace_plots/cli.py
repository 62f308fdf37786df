"""Command line front end for figure rendering.

Exit codes: 0 with a figure written, 1 when the timeline has no data rows
(warning only), 2 when a file is missing or malformed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .render import TimelineFormatError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plots",
        description="Render entropy-timeline figures from covtrace output files.",
    )
    parser.add_argument("--timeline", required=True, help="entropy_timeline.csv path")
    parser.add_argument("--result", required=True, help="result.json path")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--format", choices=("png", "svg"), default="png")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    for path in (args.timeline, args.result):
        if not Path(path).is_file():
            print(f"plots: no such file: {path}", file=sys.stderr)
            return 2
    try:
        written = render(args.timeline, args.result, args.out, fmt=args.format)
    except TimelineFormatError as exc:
        print(f"plots: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"plots: result file is not valid JSON: {exc}", file=sys.stderr)
        return 2
    if not written:
        print("plots: timeline has no data rows; no figure written", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
