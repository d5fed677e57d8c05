"""Command-line entry point.

Exit codes: 0 success, 1 a checked threshold was violated, 2 bad configuration.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .fem import build_mesh, dump_mesh_csv
from .harness import (
    ConfigError,
    PUT_PARAMS,
    atomic_write,
    dumps_json,
    convergence_study,
    load_config,
    price,
    reproduce_tables,
)
from .jump import build_quadratures, dump_quadrature_csv
from .timestepper import Scheme

EXIT_OK, EXIT_THRESHOLD, EXIT_CONFIG = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="levyfem", description="Two-asset jump-diffusion option pricer (P1 FEM).")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("price", help="price one option from an INI config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="write the result as JSON here")

    t = sub.add_parser("tables", help="reproduce a reference table")
    t.add_argument("--which", type=int, choices=(3, 4, 6), required=True)
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--n-per-side", type=int, default=129)
    t.add_argument("--dt", type=float, default=0.01)
    t.add_argument("--M", type=float, default=4.5)
    t.add_argument("--scheme", choices=[s.value for s in Scheme], default=Scheme.IMEX_CN.value)
    t.add_argument("--delta", type=float, help="smoothing half-width (default depends on the table)")
    t.add_argument("--workers", type=int, default=1)

    c = sub.add_parser("converge", help="refinement study along one axis")
    c.add_argument("--axis", choices=("h", "dt", "delta", "M", "quad"), required=True)
    c.add_argument("--levels", type=int, default=4)
    c.add_argument("--out", help="write the study as JSON here")

    m = sub.add_parser("dump-mesh", help="write vertex and triangle CSVs")
    m.add_argument("--M", type=float, default=4.5)
    m.add_argument("--n-per-side", type=int, default=129)
    m.add_argument("--out", default=".", help="output directory")

    q = sub.add_parser("dump-quadrature", help="write jump quadrature nodes and weights")
    q.add_argument("--config", help="INI config for the model (default: basket-put parameters)")
    q.add_argument("--n-nodes", type=int, default=128)
    q.add_argument("--window", type=float, default=8.0)
    q.add_argument("--out", default="quadrature.csv")
    return ap


def _emit(doc, out):
    text = dumps_json(doc)
    if out:
        atomic_write(out, text)
    sys.stdout.write(text)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.cmd == "price":
            _emit(price(load_config(args.config)), args.out)
            return EXIT_OK

        if args.cmd == "tables":
            rep = reproduce_tables(args.which, args.out, n_per_side=args.n_per_side, dt=args.dt, M=args.M,
                                   scheme=args.scheme, delta=args.delta, workers=args.workers)
            for r in rep["rows"]:
                print(json.dumps(r, default=float))
            print(f"table {args.which}: {'PASS' if rep['passed'] else 'FAIL'}")
            return EXIT_OK if rep["passed"] else EXIT_THRESHOLD

        if args.cmd == "converge":
            res = convergence_study(args.axis, args.levels)
            _emit(res, args.out)
            return EXIT_OK if res["passed"] else EXIT_THRESHOLD

        if args.cmd == "dump-mesh":
            os.makedirs(args.out, exist_ok=True)
            space = build_mesh(args.M, args.n_per_side)
            dump_mesh_csv(space, os.path.join(args.out, "vertices.csv"), os.path.join(args.out, "triangles.csv"))
            return EXIT_OK

        if args.cmd == "dump-quadrature":
            params = load_config(args.config).params if args.config else PUT_PARAMS
            dump_quadrature_csv(build_quadratures(params, args.n_nodes, args.window), args.out)
            return EXIT_OK
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as e:
        print(f"invalid argument: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
