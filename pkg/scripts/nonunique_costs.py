"""Enumerate both maximal solutions of robust_1d_nonunique and compare their costs."""

import argparse

from hygame import builtin_scenario, evaluate_cost, simulate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--xi", type=float, default=2.0)
    args = ap.parse_args()

    sc = builtin_scenario("robust_1d_nonunique")
    P = sc.params["P"]
    print(f"P = {P:.10f}, P*xi^2 = {P * args.xi ** 2:.10f}")
    for pair in simulate(sc.system, [args.xi], sc.sim, law=sc.law):
        rep = evaluate_cost(pair, sc.costs)
        jumps = ", ".join(f"t={t:.6f}" for t, _, _, _, _ in pair.jumps()) or "none"
        print(f"branch {pair.branch}: jumps at {jumps}; flow {rep.flow_cost:.10f} + jump {rep.jump_cost:.10f} "
              f"+ terminal {rep.terminal_cost:.3e} = {rep.total:.10f}")


if __name__ == "__main__":
    main()
