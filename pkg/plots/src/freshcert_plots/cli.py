"""Render figures from freshcert CLI outputs: pure consumers of the
documented CSV/JSON schemas, no certificate quantity is recomputed."""

from __future__ import annotations

import argparse

from . import render


def main(argv=None):
    parser = argparse.ArgumentParser(prog="freshcert-plot")
    sub = parser.add_subparsers(dest="kind", required=True)

    p = sub.add_parser("bars", help="budget bars + proxy ratio panel")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("graph", help="one collision-graph drawing")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("panels", help="grid of collision graphs")
    p.add_argument("--in", dest="inp", required=True, nargs="+")
    p.add_argument("--out", required=True)

    p = sub.add_parser("curves", help="sweep curves")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("convergence", help="width-probe error boxes")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)

    args = parser.parse_args(argv)
    if args.kind == "bars":
        render.plot_certificates(args.inp, args.out)
    elif args.kind == "graph":
        render.plot_graph(args.inp, args.out)
    elif args.kind == "panels":
        render.plot_graph_panels(args.inp, args.out)
    elif args.kind == "curves":
        render.plot_curves(args.inp, args.out)
    else:
        render.plot_convergence(args.inp, args.out)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
