"""Command line wrapper: opinion-steer-plots --kind KIND --in CSV... --out IMG."""

from __future__ import annotations

import argparse
import sys
import traceback
from pathlib import Path

from .figures import KINDS, FigureRequest, render_figures
from .trajfile import TrajectoryFormatError


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="opinion-steer-plots",
        description="Render figures from opinion-steer trajectory CSVs.",
    )
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument(
        "--in",
        dest="inputs",
        nargs="+",
        required=True,
        metavar="TRAJ_CSV",
        help="trajectory files; keep the _summary.json sidecars next to them "
        "for policy labels and the target value",
    )
    parser.add_argument("--out", required=True, help="output image path (.png/.svg/.pdf)")
    parser.add_argument(
        "--target",
        type=float,
        default=None,
        help="target line for comparison figures; default: read from the sidecars",
    )
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0

    try:
        out = render_figures(
            FigureRequest(
                inputs=tuple(Path(p) for p in args.inputs),
                kind=args.kind,
                out=Path(args.out),
                target=args.target,
            )
        )
    except (TrajectoryFormatError, ValueError, OSError) as exc:
        print(f"opinion-steer-plots: error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 1
    print(f"{args.kind}: {len(args.inputs)} input(s) -> {out}")
    return 0
