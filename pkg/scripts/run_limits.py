"""Convergence tables for both thin-plate scalings and the eps -> 0 limit."""

import argparse

import numpy as np

from memsx.core import ModelParams, PermittivityProfile, build_grid
from memsx.limits import aspect_ratio_study, thin_plate_study


def show(title, table):
    print(f"\n{title}")
    print(f"{table.parameter:>8} {'energy':>20} {'limit':>20} {'gap':>12} {'order':>8}")
    for v, e, lim, gap, order, *_ in table.rows:
        o = "" if order is None else f"{order:.3f}"
        print(f"{v:8.4f} {e:20.14f} {lim:20.14f} {gap:12.4e} {o:>8}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--nx", type=int, default=127)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    u = lambda x: -0.3 * np.sin(np.pi * x)
    prof = PermittivityProfile.constant(2.0)
    deltas = [0.2, 0.1, 0.05, 0.025]
    grid = build_grid(args.nx, 33, 9)
    for scaling in ("O1", "Od"):
        show(f"thin plate, {scaling}", thin_plate_study(u, prof, scaling, deltas, ModelParams(), grid, jobs=args.jobs))
    grid = build_grid(2 * args.nx + 1, 17, 9)
    for model in ("transmission", "robin"):
        table = aspect_ratio_study(u, prof, model, [0.4, 0.2, 0.1, 0.05], ModelParams(), grid, jobs=args.jobs)
        show(f"aspect ratio, {model}", table)


if __name__ == "__main__":
    main()
