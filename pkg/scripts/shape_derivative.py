"""Force vs finite-difference energy derivative for all potential models."""

import argparse

import numpy as np

from memsx.core import ModelParams, PermittivityProfile, build_grid
from memsx.forces import seeded_test_fields, validate_shape_derivative


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--nx", type=int, default=127)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--eps", type=float, default=0.2)
    args = ap.parse_args()

    grid = build_grid(args.nx, 33, 17)
    u = -0.3 * np.sin(np.pi * grid.x)
    p = ModelParams(delta=0.1, eps=args.eps)
    prof = PermittivityProfile.affine(2.0, 5.0)
    for k, v in enumerate(seeded_test_fields(grid, args.seed)):
        for model in ("transmission", "membrane", "robin"):
            r = validate_shape_derivative(u, v, model, p, grid, prof)
            print(f"v{k} {model:>12}: analytic {r['analytic']: .10e}  fd {r['fd']: .10e}  rel {r['rel_err']:.2e}")


if __name__ == "__main__":
    main()
