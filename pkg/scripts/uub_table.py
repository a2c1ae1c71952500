"""Tabulate the ultimate-boundedness quantities over a grid of kappa and ||alpha||.

Defaults are the PVTOL certificates (lambda_low = 1, rho_W = 1/1.3 - 1) and gains.
"""
import argparse

import numpy as np

from vfcfc.analysis import uub_bounds


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--lambda-low", type=float, default=1.0)
    ap.add_argument("--rho", type=float, default=1 / 1.3 - 1)
    ap.add_argument("--l1", type=float, default=0.5)
    ap.add_argument("--l2", type=float, default=0.1)
    ap.add_argument("--mu", type=float, default=0.1)
    ap.add_argument("--kappa", type=float, nargs="+", default=[0.01, 0.05, 0.1, 0.5, 1, 5, 20])
    ap.add_argument("--alpha-norm", type=float, nargs="+", default=[0.0, 0.5, 1.0, 2.0])
    a = ap.parse_args()
    print(f"{'kappa':>8} {'|alpha|':>8} {'K1':>9} {'K2':>9} {'K3':>9} {'X1':>7} {'X2':>7} {'R':>9} {'dbar':>9}")
    for k in a.kappa:
        for an in a.alpha_norm:
            u = uub_bounds(k, a.lambda_low, a.rho, a.l1, a.l2, a.mu, an, np.eye(2))
            print(f"{k:8.3g} {an:8.3g} {u.K1:9.5g} {u.K2:9.5g} {u.K3:9.5g} {u.X1:7.4g} {u.X2:7.4g} "
                  f"{u.R:9.5g} {u.dbar:9.5g}")


if __name__ == "__main__":
    main()
