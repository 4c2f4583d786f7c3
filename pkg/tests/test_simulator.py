import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hygame import (
    GameSystem,
    HybridInputSignal,
    InputDims,
    Policy,
    Region,
    SimConfig,
    TerminalStatus,
    close_loop,
    simulate,
    simulate_open_loop,
)
from hygame.errors import BranchLimitExceeded, DimensionMismatch, InfeasibleInput, InvalidInitialState
from hygame.simulator import rk4_step

from oracles import bounce_ratio, rk4_exponential

RATE = -1.0 - 0.4481063221007981 / 1.304 + 0.4481063221007981 / 4.0  # closed-loop robust_1d rate


def _decay(a=-1.0, C=None, D=None, X=None):
    return GameSystem(
        1, InputDims(), lambda x, u: a * x, lambda x, u: x,
        C or Region.everything(), D or Region.empty(), X or Region.empty(),
    )


# --- robust_1d branching ----------------------------------------------------------

def test_two_branches_sorted(robust_pairs):
    assert [p.branch for p in robust_pairs] == ["0", "1"]


def test_continuous_branch_monotone(robust_pairs):
    cont = robust_pairs[0]
    assert cont.arc.J == 0
    xs = cont.arc.states[0][:, 0]
    assert np.all(np.diff(xs) < 0)
    ts = cont.arc.times[0]
    np.testing.assert_allclose(xs, 2.0 * np.exp(RATE * ts), rtol=1e-9)


def test_hybrid_branch_jump(robust_pairs):
    hyb = robust_pairs[1]
    assert hyb.arc.J == 1
    t_h, pre, post = hyb.arc.jump(0)
    assert pre[0] == pytest.approx(1.0, abs=1e-8)
    assert post[0] == 0.5
    assert t_h == pytest.approx(math.log(2) / -RATE, abs=1e-7)
    assert t_h == pytest.approx(0.5628, abs=1e-4)
    assert np.all(np.diff(hyb.arc.states[1][:, 0]) < 0)


def test_flow_and_jump_priority(robust):
    flow = simulate(robust.system, [2.0], replace(robust.sim, policy=Policy.FLOW, t_budget=2.0), law=robust.law)
    jump = simulate(robust.system, [2.0], replace(robust.sim, policy=Policy.JUMP, t_budget=2.0), law=robust.law)
    assert len(flow) == 1 and flow[0].arc.J == 0
    assert len(jump) == 1 and jump[0].arc.J == 1


def test_branch_limit(robust):
    with pytest.raises(BranchLimitExceeded):
        simulate(robust.system, [2.0], replace(robust.sim, max_branches=1, t_budget=2.0), law=robust.law)


def test_branch_count_below_mu(robust):
    # Starting below mu there is no overlap to branch on.
    pairs = simulate(robust.system, [0.8], replace(robust.sim, t_budget=1.0), law=robust.law)
    assert len(pairs) == 1


# --- bouncing ball ----------------------------------------------------------------

def test_ball_bounces_geometric(ball_pair):
    r = bounce_ratio(0.8, 10.0, -20.0)
    pre_v = [pre[1] for _, _, pre, _, _ in ball_pair.jumps()]
    post_v = [post[1] for _, _, _, post, _ in ball_pair.jumps()]
    assert pre_v[0] == pytest.approx(-math.sqrt(3.0), abs=1e-8)
    for a, b in zip(pre_v, post_v):
        assert b / a == pytest.approx(r, rel=1e-10)
    # flight times: t_1 = 1 + sqrt(3), then 2 |v_k|
    t = 1.0 + math.sqrt(3.0)
    v = math.sqrt(3.0)
    for k, (tk, _, pre, _, _) in enumerate(ball_pair.jumps()):
        assert tk == pytest.approx(t, abs=1e-7)
        assert abs(pre[0]) <= 1e-8
        v *= -r
        t += 2 * v


def test_ball_reaches_terminal_set(ball_pair, ball):
    assert ball_pair.status is TerminalStatus.REACHED_TERMINAL_SET
    X = ball.system.terminal_set
    assert X.contains(ball_pair.arc.final_state)
    assert not any(X.contains(x) for _, _, x in list(ball_pair.arc.samples())[:-1])
    assert ball_pair.terminal_time == ball_pair.arc.final_time


def test_ball_zeno(zeno_pair):
    assert zeno_pair.status is TerminalStatus.ZENO_TRUNCATED
    r = abs(bounce_ratio(0.8, 10.0, -20.0))
    t_inf = 1.0 + math.sqrt(3.0) + 2 * math.sqrt(3.0) * r / (1 - r)
    assert zeno_pair.arc.final_time.t == pytest.approx(t_inf, abs=1e-4)


def test_start_in_terminal_set(ball):
    pairs = simulate(ball.system, [0.1, 0.1], ball.sim, law=ball.law)
    assert len(pairs) == 1
    p = pairs[0]
    assert p.status is TerminalStatus.REACHED_TERMINAL_SET
    assert (p.terminal_time.t, p.terminal_time.j) == (0.0, 0)
    assert p.arc.J == 0 and len(p.arc.times[0]) == 1


def test_invalid_initial_state(ball):
    with pytest.raises(InvalidInitialState):
        simulate(ball.system, [-1.0, 1.0], ball.sim, law=ball.law)
    with pytest.raises(DimensionMismatch):
        simulate(ball.system, [1.0, 1.0, 1.0], ball.sim, law=ball.law)


def test_flow_stall_ends_solution():
    sys = _decay(a=1.0, C=Region.box([0.0], [1.0]))
    p = simulate(sys, [0.5], SimConfig(t_budget=5.0))[0]
    assert p.status is TerminalStatus.FLOW_STALLED
    assert p.arc.final_state[0] == pytest.approx(1.0, abs=1e-8)
    assert p.arc.final_time.t == pytest.approx(math.log(2), abs=1e-8)


def test_timer_stays_in_range(periodic):
    p = simulate(periodic.system, [1.0, 0.0], replace(periodic.sim, t_budget=3.0), law=periodic.law)[0]
    taus = np.concatenate([xs[:, 1] for xs in p.arc.states])
    assert taus.min() >= 0.0 and taus.max() <= 1.0 + 1e-12
    assert p.arc.J == 3
    for k in range(p.arc.J):
        assert p.arc.jump(k)[0] == pytest.approx(k + 1.0, abs=1e-9)


def test_deterministic(robust):
    cfg = replace(robust.sim, t_budget=1.0)
    a = simulate(robust.system, [2.0], cfg, law=robust.law)
    b = simulate(robust.system, [2.0], cfg, law=robust.law)
    for p, q in zip(a, b):
        for s, t in zip(p.arc.states, q.arc.states):
            np.testing.assert_array_equal(s, t)


# --- integrator -----------------------------------------------------------------

@given(st.floats(-3, 1), st.floats(0.01, 0.5), st.floats(-5, 5))
def test_rk4_step_matches_closed_form(a, h, x0):
    out = rk4_step(lambda x: a * x, np.array([x0]), h)
    assert out[0] == pytest.approx(rk4_exponential(a, x0, h, 1), rel=1e-12, abs=1e-14)


def test_rk4_order_on_robust_closed_loop(robust):
    cl = close_loop(robust.system, robust.law)
    errs = []
    for dt in (0.1, 0.05, 0.025):
        cfg = SimConfig(dt_max=dt, t_budget=1.0, policy=Policy.FLOW)
        p = simulate(cl, [2.0], cfg)[0]
        errs.append(abs(p.arc.final_state[0] - 2.0 * math.exp(RATE * 1.0)))
    assert errs[0] / errs[1] >= 8 and errs[1] / errs[2] >= 8


# --- open loop ------------------------------------------------------------------

def test_open_loop_exponential():
    u = HybridInputSignal.from_functions([0.0, math.log(2)], InputDims())
    p = simulate_open_loop(_decay(), [2.0], u, SimConfig(dt_max=1e-3))
    assert p.arc.final_state[0] == pytest.approx(1.0, abs=1e-6)


def test_open_loop_ball_jump_at_zero(ball):
    u = HybridInputSignal.from_functions([0.0, 0.0, 0.0], ball.system.dims, jump_inputs=[[0.0, 0.0]])
    p = simulate_open_loop(ball.system, [0.0, -1.0], u)
    np.testing.assert_allclose(p.arc.jump(0)[2], [0.0, 0.8])


def test_open_loop_infeasible(ball):
    with pytest.raises(InfeasibleInput):
        simulate_open_loop(ball.system, [1.0, 1.0], None)
    late = HybridInputSignal.from_functions([0.0, 0.5, 0.5], ball.system.dims, jump_inputs=[[0.0, 0.0]])
    with pytest.raises(InfeasibleInput):
        simulate_open_loop(ball.system, [1.0, 1.0], late)
    long = HybridInputSignal.from_functions([0.0, 5.0], ball.system.dims)
    with pytest.raises(InfeasibleInput):
        simulate_open_loop(ball.system, [1.0, 1.0], long)


def test_open_loop_matches_closed_loop(robust):
    cfg = SimConfig(dt_max=1e-3, t_budget=0.5, policy=Policy.FLOW)
    p = simulate(robust.system, [2.0], cfg, law=robust.law)[0]
    K = np.array([robust.law.C1(np.array([1.0]))[0], robust.law.C2(np.array([1.0]))[0]])
    u = HybridInputSignal.from_functions(
        [0.0, 0.5], robust.system.dims, lambda t, j: K * 2.0 * math.exp(RATE * t), samples_per_interval=501
    )
    q = simulate_open_loop(robust.system, [2.0], u, cfg)
    assert q.arc.final_state[0] == pytest.approx(p.arc.final_state[0], rel=1e-6)
