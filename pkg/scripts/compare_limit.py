"""Particle field against the limiting continuum field on the unit cube.

Usage: python scripts/compare_limit.py [--out convergence.csv] [--seed 0] [--radii 0.02 0.01 0.005]
"""

import argparse
import logging

from smallbodies.greens import GreensKernel
from smallbodies.medium import Box, Constant, Medium, PlaneWave
from smallbodies.study import compare_limit


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="convergence.csv")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--h", default="-0.05j", help="impedance function value (constant)")
    parser.add_argument("--kappa", type=float, default=0.5)
    parser.add_argument("--grid", type=int, default=24, help="continuum nodes per axis")
    parser.add_argument("--radii", type=float, nargs="+", default=[0.02, 0.01, 0.005])
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    medium = Medium(Box((0, 0, 0), (1, 1, 1)), 1.0, Constant(1.0), 1.0)
    kernel = GreensKernel.from_medium(medium)
    result = compare_limit(medium, kernel, PlaneWave((0, 0, 1)), complex(args.h), 1.0, args.kappa, args.radii,
                           grid_n=args.grid, seed=args.seed)
    result.to_csv(args.out)
    print(f"{'a':>8} {'M':>6} {'probes':>6} {'max rel':>11} {'mean rel':>11} {'time [s]':>9}")
    for r in result.rows:
        print(f"{r.a:8.4g} {r.M:6d} {r.n_probes:6d} {r.max_rel_discrepancy:11.3e} {r.mean_rel_discrepancy:11.3e}"
              f" {r.runtime:9.2f}")
    print("monotone:", result.monotone())


if __name__ == "__main__":
    main()
