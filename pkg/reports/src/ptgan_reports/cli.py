"""Render figures from run directories produced by the training CLI."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .bundles import load_run
from .plots import plot_density, plot_frontier, plot_variance


def cmd_variance(args) -> int:
    bundles = [load_run(p) for p in args.runs]
    plot_variance(bundles, args.out, field=args.field)
    print(args.out)
    return 0


def cmd_frontier(args) -> int:
    plot_frontier(args.table, args.out)
    print(args.out)
    return 0


def cmd_density(args) -> int:
    bundle = load_run(args.run)
    rows, alphas, _ = bundle.samples()
    mask = np.isclose(alphas, args.alpha)
    if not mask.any():
        raise ValueError(f"no sample rows at alpha={args.alpha}")
    centers = None
    if args.centers:
        centers = np.array([[float(v) for v in pt.split(",")]
                            for pt in args.centers.split(";")])
    plot_density(rows[mask], centers, args.out)
    print(args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ptgan-report")
    sub = parser.add_subparsers(dest="command", required=True)

    p_var = sub.add_parser("variance", help="log-variance trajectories")
    p_var.add_argument("--runs", nargs="+", required=True)
    p_var.add_argument("--field", default="loss_var")
    p_var.add_argument("--out", required=True)
    p_var.set_defaults(fn=cmd_variance)

    p_front = sub.add_parser("frontier", help="utility/fairness frontier")
    p_front.add_argument("--table", required=True)
    p_front.add_argument("--out", required=True)
    p_front.set_defaults(fn=cmd_frontier)

    p_den = sub.add_parser("density", help="sample scatter/density panel")
    p_den.add_argument("--run", required=True)
    p_den.add_argument("--alpha", type=float, default=1.0)
    p_den.add_argument("--centers", default=None,
                       help="semicolon-separated points, e.g. '1,0;0,1'")
    p_den.add_argument("--out", required=True)
    p_den.set_defaults(fn=cmd_density)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
