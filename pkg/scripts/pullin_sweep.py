"""Pull-in threshold of the reduced model against a constant gap correction N.

Both estimates (steady continuation and dynamic bisection) are printed.
"""

import argparse

import numpy as np

from memsx.core import ModelParams
from memsx.dynamics import ReducedForce
from memsx.steady import pull_in


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--nx", type=int, default=63)
    ap.add_argument("--gaps", type=float, nargs="+", default=[0.0, 0.05, 0.1, 0.25, 0.5])
    ap.add_argument("--beta", type=float, default=0.0)
    ap.add_argument("--tol", type=float, default=1e-4)
    args = ap.parse_args()

    x = np.linspace(0.0, 1.0, args.nx + 2)
    p = ModelParams(beta=args.beta, tau=1.0)
    print(f"{'N':>6} {'steady':>12} {'dynamic':>12} {'gap':>10}")
    for c in args.gaps:
        rep = pull_in(ReducedForce.constant_gap(x, p, c), p, tol_lam=args.tol, dt=1e-2)
        print(f"{c:6.3f} {rep.lambda_star_steady:12.6f} {rep.lambda_star_dynamic:12.6f} {rep.gap:10.2e}")


if __name__ == "__main__":
    main()
