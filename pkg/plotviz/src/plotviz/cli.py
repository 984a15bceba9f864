"""Command line entry point: `plotviz render --figure <id> --in <csv...>
--out <png>`."""

from __future__ import annotations

import argparse
import sys

from .figures import FIGURES, render
from .io import SchemaError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plotviz",
        description="regenerate figures from experiment CSV tables")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    rend = sub.add_parser("render", help="draw one figure")
    rend.add_argument("--figure", required=True, choices=sorted(FIGURES))
    rend.add_argument("--in", dest="inputs", nargs="+", required=True,
                      metavar="CSV")
    rend.add_argument("--out", required=True, metavar="PNG")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        info = render(args.figure, args.inputs, args.out)
    except (SchemaError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(info["path"])
    return 0


if __name__ == "__main__":
    sys.exit(main())
