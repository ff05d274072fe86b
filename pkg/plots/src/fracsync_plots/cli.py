"""Command line: fracsync-plots <kind> --in <dir> --out <file.png|svg>."""

from __future__ import annotations

import argparse
import sys

from . import FIGURE_KINDS
from .render import render
from .schemas import SchemaError


def run(argv: list[str]) -> int:
    parser = argparse.ArgumentParser(
        prog="fracsync-plots",
        description="Render diagnostic figures from fracsync output directories",
    )
    parser.add_argument("kind", choices=FIGURE_KINDS)
    parser.add_argument("--in", dest="in_dir", required=True,
                        help="experiment output directory")
    parser.add_argument("--out", dest="out_file", required=True,
                        help="output image (.png or .svg)")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        render(args.kind, args.in_dir, args.out_file)
    except SchemaError as exc:
        print(f"fracsync-plots: {exc}", file=sys.stderr)
        return 1
    print(f"fracsync-plots: wrote {args.out_file}")
    return 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))
