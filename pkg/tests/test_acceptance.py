"""Acceptance criteria 1 to 9 with pinned tolerances.

Each test prints one ``CRITERION n: PASS|FAIL`` line (visible under ``pytest -v``)
before asserting. Run ``python3 tests/test_acceptance.py`` for the lines alone.
"""

import json
import math
import time
from dataclasses import replace

import numpy as np
import pytest

from hygame import (
    HybridTime,
    QuadraticGameSpec,
    Sense,
    SimConfig,
    builtin_scenario,
    check_equivalent_conditions,
    check_flow_certificate,
    check_hjbi,
    check_jump_certificate,
    check_trajectory_convergence,
    close_loop,
    evaluate_cost,
    gradient_check,
    jump_minmax,
    saddle_sweep,
    simulate,
    solve_constant_robust,
    solve_periodic,
    synthesize_feedback,
    telescoped_bound,
)
from hygame.cli import main
from hygame.scenarios import BUILTIN, LQ_PERIODIC, bouncing_Q_D
from hygame.simulator import Policy

from oracles import bass_gain, bounce_Q_D, bounce_ratio, care_kleinman, dare_value_iteration, scalar_game_care

TOL = {
    "c1_P0": 1e-2, "c1_seconds": 5.0,
    "c2_residual": 5e-4, "c2_root": 1e-6,
    "c3_cost": 2e-3, "c3_seconds": 2.0,
    "c4_QD": 1e-4, "c4_residual": 1e-8, "c4_cost": 5e-3, "c4_ratio": 1e-3,
    "c5_rel": 1e-6, "c5_seconds": 60.0,
    "c6_care": 1e-8, "c6_dare": 1e-9,
    "c7_value": 5e-3,
    "c8_gap": 1e-9, "c8_ineq": 1e-7,
    "c9_order": 3.9, "c9_grad": 1e-5,
}


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'}  {detail}", flush=True)
        assert ok, detail
    return emit


def _scenarios():
    return [builtin_scenario(name) for name in BUILTIN]


# --- 1 ----------------------------------------------------------------------------------

def test_c1_periodic_riccati(tmp_path, verdict):
    t0 = time.perf_counter()
    sol = solve_periodic(QuadraticGameSpec.create(1, **LQ_PERIODIC))
    solve_s = time.perf_counter() - t0
    t0 = time.perf_counter()
    rc = main(["--out-dir", str(tmp_path), "solve", "riccati", "--scenario", "lq_periodic_1d"])
    cli_s = time.perf_counter() - t0
    P0 = json.loads((tmp_path / "gains.json").read_text())["P0"][0][0]
    ok = rc == 0 and abs(P0 - 6.9653) <= TOL["c1_P0"] and P0 == sol.P0[0, 0] and solve_s < TOL["c1_seconds"]
    verdict(1, ok, f"P0={P0:.6f} (6.9653 +/- {TOL['c1_P0']}), solve {solve_s:.2f}s, cli {cli_s:.2f}s, limit {TOL['c1_seconds']}s")


# --- 2 ----------------------------------------------------------------------------------

def test_c2_robust_algebra(verdict):
    a, b1, b2, Q, R1, R2 = -1.0, 1.0, 1.0, 1.0, 1.304, -4.0
    P = 0.4481
    residual = Q + 2 * P * a - P * P * (b1 ** 2 / R1 + b2 ** 2 / R2)
    spec = QuadraticGameSpec.create(1, A_C=a, B_C1=b1, B_C2=b2, Q_C=Q, R_C1=R1, R_C2=R2, has_jumps=False)
    root = scalar_game_care(a, b1, b2, Q, R1, R2)
    got = solve_constant_robust(spec).P0[0, 0]
    ok = abs(residual) < TOL["c2_residual"] and abs(got - root) <= TOL["c2_root"]
    verdict(2, ok, f"residual(0.4481)={residual:.2e} (< {TOL['c2_residual']}), |P-root|={abs(got - root):.2e} (<= {TOL['c2_root']})")


# --- 3 ----------------------------------------------------------------------------------

def test_c3_nonunique_costs(verdict):
    sc = builtin_scenario("robust_1d_nonunique")
    cfg = replace(sc.sim, policy=Policy.BOTH)
    t0 = time.perf_counter()
    pairs = simulate(sc.system, [2.0], cfg, law=sc.law)
    costs = [evaluate_cost(p, sc.costs).total for p in pairs]
    secs = time.perf_counter() - t0
    target = sc.params["P"] * 4.0
    ok = len(pairs) == 2 and all(abs(c - 1.7924) <= TOL["c3_cost"] for c in costs) and secs < TOL["c3_seconds"]
    shown = ", ".join(f"{p.branch}:{c:.6f}" for p, c in zip(pairs, costs))
    verdict(3, ok, f"{len(pairs)} solutions [{shown}] vs P*xi^2={target:.6f} (+/- {TOL['c3_cost']}), {secs:.2f}s")


# --- 4 ----------------------------------------------------------------------------------

def test_c4_bouncing_ball(verdict):
    sc = builtin_scenario("bouncing_ball")
    zeno = builtin_scenario("bouncing_ball_zeno")
    QD = bouncing_Q_D(0.8, 10.0, -20.0)
    ok_a = abs(QD - 0.1878) <= TOL["c4_QD"] and abs(QD - bounce_Q_D(0.8, 10.0, -20.0)) < 1e-14

    res = [jump_minmax([0.0, x2], sc.V, sc.system, sc.costs).value - 0.5 * x2 * x2
           for x2 in np.linspace(-3.0, 0.0, 301)]
    worst = float(np.max(np.abs(res)))
    ok_b = worst < TOL["c4_residual"]

    pair = simulate(zeno.system, [1.0, 1.0], zeno.sim, law=zeno.law)[0]
    rep = evaluate_cost(pair, zeno.costs)
    cost = rep.total_with_tail
    ok_c = rep.tail_bound is not None and abs(cost - 1.5) <= TOL["c4_cost"]

    trajs = check_trajectory_convergence(close_loop(zeno.system, zeno.law), zeno.target, [[1.0, 1.0]], zeno.sim)
    ratio = trajs[0].geometric_ratio
    oracle = abs(bounce_ratio(0.8, 10.0, -20.0))
    ok_d = trajs[0].passed and ratio is not None and abs(ratio - 0.7805) <= TOL["c4_ratio"] and abs(oracle - 0.7805) < 1e-4

    verdict(4, ok_a and ok_b and ok_c and ok_d,
            f"(a) Q_D={QD:.6f} (b) jump residual {worst:.1e} (c) cost+tail={cost:.6f} "
            f"(tail {rep.tail_bound}) (d) ratio={ratio} oracle {oracle:.6f}")


# --- 5 ----------------------------------------------------------------------------------

def test_c5_saddle_sweeps(verdict):
    eps = np.linspace(0.5, 1.5, 11)
    t0 = time.perf_counter()
    parts, ok = [], True
    for name, x0 in (("robust_1d_nonunique", [2.0]), ("bouncing_ball", [1.0, 1.0])):
        sc = builtin_scenario(name)
        cfg = replace(sc.sim, dt_max=5e-3)
        res = saddle_sweep(sc.system, sc.costs, sc.law, x0, eps, eps, cfg)
        ok &= res.holds(TOL["c5_rel"])
        parts.append(f"{name}: J(1,1)={res.cost[res.center()]:.8f} violation={res.saddle_violation():.1e}")
    secs = time.perf_counter() - t0
    ok &= secs < TOL["c5_seconds"]
    verdict(5, ok, "; ".join(parts) + f"; {secs:.1f}s (limit {TOL['c5_seconds']}s)")


# --- 6 ----------------------------------------------------------------------------------

def _random_pair(rng, scale):
    n = int(rng.integers(1, 3))
    A = scale * rng.normal(size=(n, n))
    B = rng.normal(size=(n, 1))
    return n, A, B, np.eye(n), np.array([[0.5 + rng.uniform()]])


def test_c6_degenerate_reductions(verdict):
    rng = np.random.default_rng(6)
    care_err, dare_err = 0.0, 0.0
    for _ in range(20):
        n, A, B, Q, R = _random_pair(rng, 1.5)
        sol = solve_constant_robust(QuadraticGameSpec.create(n, A_C=A, B_C1=B, Q_C=Q, R_C1=R, has_jumps=False))
        ref = care_kleinman(A, B, Q, R, K0=bass_gain(A, B))
        care_err = max(care_err, float(np.abs(sol.P0 - ref).max()))
    for _ in range(20):
        n, A, B, Q, R = _random_pair(rng, 0.8)
        sol = solve_constant_robust(QuadraticGameSpec.create(n, A_D=A, B_D1=B, Q_D=Q, R_D1=R, has_flow=False))
        ref = dare_value_iteration(A, B, Q, R)
        dare_err = max(dare_err, float(np.abs(sol.P0 - ref).max()))
    ok = care_err <= TOL["c6_care"] and dare_err <= TOL["c6_dare"]
    verdict(6, ok, f"CARE max err {care_err:.1e} (<= {TOL['c6_care']}), DARE max err {dare_err:.1e} (<= {TOL['c6_dare']}), 20 specs each")


# --- 7 ----------------------------------------------------------------------------------

def _random_times(pair, rng, k=10):
    dom = pair.domain
    out = []
    for _ in range(k):
        j = int(rng.integers(0, dom.J + 1))
        lo, hi = dom.interval(j)
        out.append(HybridTime(float(rng.uniform(lo, hi)), j))
    return out


def _deviation_signs(sc, pair_fn):
    """Player 1 deviating can only raise the cost; player 2 deviating can only lower it."""
    ok = True
    for law, sense in ((sc.law.scaled(0.5, 1.0), Sense.LOWER), (sc.law.scaled(1.0, 0.5), Sense.UPPER)):
        pair = pair_fn(law)
        f = check_flow_certificate(pair, sc.costs, sc.V, sense, tol=1e-9)
        j = check_jump_certificate(pair, sc.costs, sc.V, sense, tol=1e-9)
        strict = np.concatenate([f.residuals, j.residuals])
        moved = np.abs(strict).max() > 1e-9 if strict.size else False
        ok &= f.passed and j.passed and bool(moved)
    return ok


def test_c7_telescoping(verdict):
    rng = np.random.default_rng(7)
    worst, signs, parts = 0.0, True, []
    for sc in _scenarios():
        x0 = sc.x0 if sc.name != "robust_1d_nonunique" else np.array([2.0])
        run = lambda law: simulate(sc.system, x0, replace(sc.sim, policy=Policy.FLOW if sc.sim.policy is Policy.BOTH else sc.sim.policy), law=law)[0]
        pair = run(sc.law)
        V0 = sc.V(x0)
        errs = [abs(telescoped_bound(pair, sc.costs, sc.V, upto=h) - V0) for h in _random_times(pair, rng)]
        worst = max(worst, max(errs))
        s = _deviation_signs(sc, run)
        signs &= s
        parts.append(f"{sc.name} {max(errs):.1e}{'' if s else ' sign-FAIL'}")
    ok = worst <= TOL["c7_value"] and signs
    verdict(7, ok, f"max |bound - V(x0)| {worst:.1e} (<= {TOL['c7_value']}); " + ", ".join(parts))


# --- 8 ----------------------------------------------------------------------------------

def test_c8_isaacs_and_equivalence(verdict):
    gap, eq_ok, corrupt_detected, parts = 0.0, True, True, []
    for sc in _scenarios():
        rep = check_hjbi(sc.V, sc.system, sc.costs, sc.grid)
        gap = max(gap, rep.max_isaacs_gap)
        law = synthesize_feedback(sc.V, sc.system, sc.costs, sc.grid)
        eq = check_equivalent_conditions(sc.V, sc.system, sc.costs, law, sc.grid, tol=TOL["c8_ineq"])
        bad = check_equivalent_conditions(sc.V, sc.system, sc.costs, law.scaled(-1.0, -1.0), sc.grid, tol=TOL["c8_ineq"])
        eq_ok &= eq.passed
        corrupt_detected &= not bad.passed
        worst = max(r.worst for r in eq.results.values())
        parts.append(f"{sc.name} ineq {worst:.1e}{'' if not bad.passed else ' corrupt-UNDETECTED'}")
    ok = gap < TOL["c8_gap"] and eq_ok and corrupt_detected
    verdict(8, ok, f"max Isaacs gap {gap:.1e} (< {TOL['c8_gap']}); " + ", ".join(parts))


# --- 9 ----------------------------------------------------------------------------------

def _order(errs, hs):
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])


def test_c9_numerical_hygiene(verdict):
    hs = np.array([0.1, 0.05, 0.025, 0.0125])
    robust = builtin_scenario("robust_1d_nonunique")
    cl = close_loop(robust.system, robust.law)
    rate = robust.params["a"] + sum(robust.params["gains"])
    errs = [abs(simulate(cl, [2.0], SimConfig(dt_max=h, t_budget=1.0, policy=Policy.FLOW))[0].arc.final_state[0]
                - 2.0 * math.exp(rate)) for h in hs]
    order_robust = _order(errs, hs)

    per = builtin_scenario("lq_periodic_1d")
    pcl = close_loop(per.system, per.law)
    end = lambda h: simulate(pcl, [1.0, 0.0], SimConfig(dt_max=h, t_budget=0.9, policy=Policy.FLOW))[0].arc.final_state[0]
    ref = end(hs[-1] / 16)
    order_periodic = _order([abs(end(h) - ref) for h in hs], hs)

    grad_worst = 0.0
    for sc in _scenarios():
        grad_worst = max(grad_worst, gradient_check(sc.V, sc.grid.states()))
    ok = min(order_robust, order_periodic) >= TOL["c9_order"] and grad_worst < TOL["c9_grad"]
    verdict(9, ok, f"RK4 order robust {order_robust:.3f}, periodic {order_periodic:.3f} (>= {TOL['c9_order']}); "
                   f"gradient check worst {grad_worst:.1e} (< {TOL['c9_grad']})")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
