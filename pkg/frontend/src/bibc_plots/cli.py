"""Command line interface: plots <kind> --in <csv> [--scene <cfg>] --out <img>."""

from __future__ import annotations

import argparse
import sys

from bibc_plots.figures import FIGURE_KINDS, FigureSpec, render


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="plots", description=__doc__)
    p.add_argument("kind", choices=FIGURE_KINDS)
    p.add_argument("--in", dest="csv_path", required=True, help="input CSV file")
    p.add_argument("--scene", default=None, help="scene config for room/marker overlay")
    p.add_argument("--out", required=True, help="output image path")
    p.add_argument("--title", default=None)
    p.add_argument("--dpi", type=int, default=150)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = FigureSpec(
        csv_path=args.csv_path,
        kind=args.kind,
        out_path=args.out,
        scene_path=args.scene,
        title=args.title,
        dpi=args.dpi,
    )
    path = render(spec)
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
