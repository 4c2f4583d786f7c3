"""Solve the periodic hybrid Riccati equation of lq_periodic_1d and tabulate P(tau)."""

import argparse
import csv
import time
from pathlib import Path

from hygame import QuadraticGameSpec, solve_periodic
from hygame.scenarios import LQ_PERIODIC


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=None, help="optional CSV of tau, P, KC1, KC2")
    ap.add_argument("--steps", type=int, default=2000)
    args = ap.parse_args()

    t0 = time.perf_counter()
    sol = solve_periodic(QuadraticGameSpec.create(1, **LQ_PERIODIC), steps=args.steps)
    print(f"P(0) = {sol.P0[0, 0]:.10f}  ({time.perf_counter() - t0:.2f} s)")
    print(f"fixed-point gap = {sol.conditions['fixed_point_gap']:.2e}")
    g = sol.gains_at()
    print(f"jump gains KD1 = {g['KD1'][0, 0]:.6f}, KD2 = {g['KD2'][0, 0]:.6f}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tau", "P", "KC1", "KC2"])
            for tau, P in zip(sol.tau, sol.P_grid):
                gk = sol.gains_at(tau)
                w.writerow([f"{tau:.6f}", f"{P[0, 0]:.12g}", f"{gk['KC1'][0, 0]:.12g}", f"{gk['KC2'][0, 0]:.12g}"])
        print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
