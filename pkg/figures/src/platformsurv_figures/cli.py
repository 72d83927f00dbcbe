"""Command-line entry points: one subcommand per panel family.

    platformsurv-figures metrics --input metrics.csv --out figs/
    platformsurv-figures ratio   --input se_ratios.csv --out figs/ --format png
    platformsurv-figures curves  --input curves.csv --out figs/
"""

from __future__ import annotations

import argparse
import sys

from .panels import (
    FigureSpec,
    SchemaMismatch,
    render_curve_bands,
    render_metrics_panel,
    render_ratio_panel,
)

RENDERERS = {
    "metrics": render_metrics_panel,
    "ratio": render_ratio_panel,
    "curves": render_curve_bands,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="platformsurv-figures",
                                     description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="panel", required=True)
    for name in RENDERERS:
        p = sub.add_parser(name)
        p.add_argument("--input", required=True, help="result CSV to render")
        p.add_argument("--out", default="figures", help="output directory")
        p.add_argument("--format", default="svg", choices=["svg", "png"])
        p.add_argument("--dpi", type=int, default=150)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = FigureSpec(input_csv=args.input, out=args.out, fmt=args.format, dpi=args.dpi)
    try:
        paths = RENDERERS[args.panel](spec)
    except FileNotFoundError as exc:
        print(f"error: input not found: {exc}", file=sys.stderr)
        return 3
    except SchemaMismatch as exc:
        print(f"error: schema: {exc}", file=sys.stderr)
        return 3
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
