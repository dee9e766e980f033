"""Command-line figure rendering: wncc-plot <kind> --in <csv> --out <img>."""
from __future__ import annotations

import argparse
import sys

from .figures import FIGURE_KINDS, FigureSpec, SchemaError, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="wncc-plot", description=__doc__)
    parser.add_argument("kind", choices=sorted(FIGURE_KINDS),
                        help="figure family to render")
    parser.add_argument("--in", dest="csv_path", required=True,
                        help="input CSV (harness schema)")
    parser.add_argument("--out", dest="out_path", required=True,
                        help="output image path")
    parser.add_argument("--title", default=None)
    parser.add_argument("--dpi", type=int, default=130)
    args = parser.parse_args(argv)
    spec = FigureSpec(kind=args.kind, csv_path=args.csv_path,
                      out_path=args.out_path, title=args.title,
                      style={"dpi": args.dpi})
    try:
        result = render(spec)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {result.path} ({result.n_series} series)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
