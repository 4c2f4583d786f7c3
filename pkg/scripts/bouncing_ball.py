"""Closed-loop bouncing ball: cost, Zeno tail and bounce ratio."""

import argparse

import numpy as np

from hygame import TargetSet, builtin_scenario, close_loop, evaluate_cost, simulate
from hygame.stability import trajectory_rates


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--x0", type=float, nargs=2, default=[1.0, 1.0])
    args = ap.parse_args()

    for name in ("bouncing_ball", "bouncing_ball_zeno"):
        sc = builtin_scenario(name)
        pair = simulate(sc.system, args.x0, sc.sim, law=sc.law)[0]
        rep = evaluate_cost(pair, sc.costs)
        print(f"{name}: status {pair.status.value}, {pair.arc.J} jumps, end t = {pair.domain.end.t:.6f}")
        print(f"  cost {rep.total:.10f}, tail {rep.tail_bound}, V(x0) = {sc.V(np.asarray(args.x0)):.10f}")
    sc = builtin_scenario("bouncing_ball_zeno")
    pair = simulate(close_loop(sc.system, sc.law), args.x0, sc.sim)[0]
    _, ratio = trajectory_rates(pair, TargetSet.origin(2))
    print(f"Q_D = {sc.params['Q_D']:.6f}, gains = {sc.params['gains']}, bounce ratio = {ratio:.6f} "
          f"(closed form {abs(sc.params['ratio']):.6f})")


if __name__ == "__main__":
    main()
