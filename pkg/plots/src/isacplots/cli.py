"""`plot` command: render one figure from isacal CSV outputs.

Exit codes: 0 success, 2 bad input (schema mismatch, empty CSV, missing
file, unknown kind).
"""

from __future__ import annotations

import argparse
import sys

from .io import EmptyInputError, SchemaError
from .render import FigureSpec, render


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="plot", description=__doc__)
    p.add_argument("--kind", required=True,
                   choices=("roc", "tradeoff", "snr", "precoder", "adm"))
    p.add_argument("--in", dest="inputs", required=True, nargs="+",
                   help="input CSV path(s)")
    p.add_argument("--out", required=True, help="output image path")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = FigureSpec(kind=args.kind, inputs=tuple(args.inputs), out=args.out)
    try:
        summary = render(spec)
    except (SchemaError, EmptyInputError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.out}: {summary['curves']} curve(s)"
          + (" with error bars" if summary["error_bars"] else ""))
    return 0


if __name__ == "__main__":
    sys.exit(main())
