"""Steady branch of the classical and the gap-corrected reduced model.

Writes a CSV per model (lambda, ||u||, min u, energy, converged, zipped, iters).
"""

import argparse
import csv

import numpy as np

from memsx.core import ModelParams
from memsx.dynamics import ReducedForce
from memsx.steady import bifurcation_diagram


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--nx", type=int, default=63)
    ap.add_argument("--lam-max", type=float, default=12.0)
    ap.add_argument("--points", type=int, default=49)
    ap.add_argument("--out", default="bifurcation")
    args = ap.parse_args()

    x = np.linspace(0.0, 1.0, args.nx + 2)
    p = ModelParams()
    lams = np.linspace(args.lam_max / args.points, args.lam_max, args.points)
    for name, gap in (("classical", 0.0), ("gap025", 0.25)):
        table = bifurcation_diagram(ReducedForce.constant_gap(x, p, gap), p, lams)
        path = f"{args.out}_{name}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(table.columns)
            w.writerows(table.rows)
        last = max((r[0] for r in table.rows if r[4] and r[5] == 0), default=float("nan"))
        print(f"{name}: last unzipped steady state at lambda = {last:.4f} -> {path}")


if __name__ == "__main__":
    main()
