"""11 x 11 saddle-point sweeps on robust_1d_nonunique and bouncing_ball."""

import argparse
import csv
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from hygame import builtin_scenario, saddle_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--points", type=int, default=11)
    ap.add_argument("--dt", type=float, default=5e-3)
    ap.add_argument("--out-dir", type=Path, default=None)
    args = ap.parse_args()

    eps = np.linspace(0.5, 1.5, args.points)
    for name, x0 in (("robust_1d_nonunique", [2.0]), ("bouncing_ball", [1.0, 1.0])):
        sc = builtin_scenario(name)
        t0 = time.perf_counter()
        res = saddle_sweep(sc.system, sc.costs, sc.law, x0, eps, eps, replace(sc.sim, dt_max=args.dt))
        i, j = res.center()
        print(f"{name}: J(1,1) = {res.cost[i, j]:.10f}, violation {res.saddle_violation():.2e}, "
              f"holds {res.holds()}, {time.perf_counter() - t0:.1f} s")
        print("  J(eps_u, 1):", np.array2string(res.cost[:, j], precision=6))
        print("  J(1, eps_w):", np.array2string(res.cost[i, :], precision=6))
        if args.out_dir:
            args.out_dir.mkdir(parents=True, exist_ok=True)
            with open(args.out_dir / f"saddle_{name}.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["eps_u", "eps_w", "cost", "status"])
                w.writerows(res.rows())


if __name__ == "__main__":
    main()
