"""Exact single-ball charges against the refined small-body charge, for shrinking radii.

Usage: python scripts/oracle_charges.py [--h 1.0] [--kappa 0.5] [--k 1.0]
"""

import argparse

import numpy as np

from smallbodies import oracle


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--h", type=complex, default=1.0)
    parser.add_argument("--kappa", type=float, default=0.5)
    parser.add_argument("--k", type=float, default=1.0)
    parser.add_argument("--radii", type=float, nargs="+", default=[1e-2, 5e-3, 2.5e-3, 1.25e-3])
    args = parser.parse_args()

    print(f"{'a':>9} {'l_max':>5} {'Q_exact':>26} {'Q_refined':>26} {'|ratio - 1|':>12} {'Re ratio - 1':>13}"
          f" {'k^2 a^(1+kappa)/(3h)':>21}")
    for a in args.radii:
        zeta = args.h / a**args.kappa
        series = oracle.solve_sphere_exact(a, zeta, args.k)
        q = oracle.extract_monopole_charge(series)
        q_ref = -4 * np.pi * zeta * a * a / (1 + zeta * a)
        predicted = abs(args.k**2 * a ** (1 + args.kappa) / (3 * args.h))
        ratio = q / q_ref
        print(f"{a:9.3g} {series.l_max:5d} {q:26.6e} {q_ref:26.6e} {abs(ratio - 1):12.3e} {ratio.real - 1:13.3e}"
              f" {predicted:21.3e}")
    for radius in (1.0, 0.5):
        t = np.array([0.0, 0.0, radius])
        print(f"single-layer identity at a = {radius}: "
              f"{oracle.single_layer_sphere_identity(radius, t) / radius:.15f} (exact 1)")
    print(f"normal-derivative identity ratio: {oracle.normal_derivative_layer_identity(1.0):.15f} (exact 1)")


if __name__ == "__main__":
    main()
