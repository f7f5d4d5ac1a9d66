"""Riemann-type sums of 1/|x| over the unit ball, with and without a cutoff around the origin.

Usage: python scripts/riemann_study.py [--out riemann.csv] [--deltas 0.1 0.05 0]
"""

import argparse

import numpy as np

from smallbodies.limits import PointSet, SingularFunction, limit_study
from smallbodies.medium import Ball


def inverse_distance(x):
    return 1.0 / np.linalg.norm(x, axis=-1)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="riemann.csv")
    parser.add_argument("--kappa", type=float, default=0.5)
    parser.add_argument("--placement", default="jitter", choices=["lattice", "jitter", "poisson"])
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--radii", type=float, nargs="+", default=[0.04, 0.02, 0.01])
    parser.add_argument("--deltas", type=float, nargs="+", default=[0.0], help="decreasing cutoffs")
    args = parser.parse_args()

    f = SingularFunction(inverse_distance, PointSet((0.0, 0.0, 0.0)), nu=1.0, c=1.0)
    study = limit_study(f, 1.0, Ball((0.0, 0.0, 0.0), 1.0), args.kappa, args.radii, args.deltas,
                        placement=args.placement, seed=args.seed, reference_full=2 * np.pi)
    study.to_csv(args.out)
    print(f"reference 2 pi = {2 * np.pi:.12f}")
    print(f"{'delta':>6} {'a':>7} {'M':>6} {'sum':>12} {'rel err (cutoff)':>17} {'rel err (full)':>15}")
    for r in study.rows:
        ref = abs(study.references_cutoff[r.delta])
        print(f"{r.delta:6.3g} {r.a:7.4g} {r.M_used:6d} {r.value.real:12.6f} {r.error_cutoff / ref:17.3e}"
              f" {r.error_full / (2 * np.pi):15.3e}")


if __name__ == "__main__":
    main()
