import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hygame import (
    HybridArc,
    HybridInputSignal,
    HybridTime,
    HybridTimeDomain,
    InputDims,
    OutOfDomain,
    SolutionPair,
    TerminalStatus,
    eval_arc,
    remainder,
    truncate,
)
from hygame.domain import read_csv, write_csv
from hygame.errors import EmptyDomain


def _pair(times, states, dims=InputDims(), jump_inputs=None, flow_inputs=None):
    arc = HybridArc(tuple(np.asarray(t, float) for t in times), tuple(np.asarray(s, float) for s in states))
    fv = flow_inputs or tuple(np.zeros((len(t), dims.mC)) for t in arc.times)
    jv = np.zeros((arc.J, dims.mD)) if jump_inputs is None else jump_inputs
    inp = HybridInputSignal(arc.domain, arc.times, fv, jv, dims)
    return SolutionPair(arc, inp)


# --- hybrid time ----------------------------------------------------------------

def test_hybrid_time_order_uses_t_plus_j():
    assert HybridTime(0.5, 1) > HybridTime(1.2, 0)
    assert HybridTime(1.0, 0) < HybridTime(0.0, 1)  # tie on t + j broken by j
    assert HybridTime(2.0, 3) == HybridTime(2.0, 3)


def test_hybrid_time_rejects_negative():
    with pytest.raises(ValueError):
        HybridTime(-0.1, 0)
    with pytest.raises(ValueError):
        HybridTime(0.0, -1)


times_st = st.builds(HybridTime, st.floats(0, 50, allow_nan=False), st.integers(0, 50))


@given(st.lists(times_st, min_size=2, max_size=20))
def test_hybrid_time_is_total_order(ts):
    s = sorted(ts)
    for a, b in zip(s, s[1:]):
        assert a <= b
        assert (a.t + a.j, a.j) <= (b.t + b.j, b.j)


@given(st.lists(st.floats(0, 5, allow_nan=False), min_size=1, max_size=8))
def test_domain_traversal_is_increasing(gaps):
    jt = np.concatenate([[0.0], np.cumsum(gaps)])
    if len(jt) < 2:
        jt = np.array([0.0, 0.0])
    dom = HybridTimeDomain(tuple(jt))
    pts = [HybridTime(t, j) for j, (lo, hi) in enumerate(dom) for t in (lo, hi)]
    assert pts == sorted(pts)
    for j in range(dom.J + 1):
        lo, hi = dom.interval(j)
        assert (lo, j) in dom and (hi, j) in dom
    assert (jt[-1] + 1.0, dom.J) not in dom
    assert (0.0, dom.J + 1) not in dom


def test_domain_needs_two_times_and_monotone():
    with pytest.raises(EmptyDomain):
        HybridTimeDomain((0.0,))
    with pytest.raises(ValueError):
        HybridTimeDomain((0.0, 1.0, 0.5))


# --- arcs ----------------------------------------------------------------------

def test_arc_checks_jump_endpoints():
    with pytest.raises(ValueError):
        HybridArc((np.array([0.0, 1.0]), np.array([1.5, 2.0])), (np.zeros((2, 1)), np.zeros((2, 1))))


def test_arc_allows_degenerate_intervals():
    arc = HybridArc(
        (np.array([0.0, 1.0]), np.array([1.0]), np.array([1.0, 2.0])),
        (np.zeros((2, 1)), np.ones((1, 1)), np.full((2, 1), 2.0)),
    )
    assert arc.J == 2
    assert arc.domain.jump_times == (0.0, 1.0, 1.0, 2.0)


def test_eval_constant_arc():
    c = np.array([3.0, -1.0])
    arc = HybridArc((np.linspace(0, 2, 5),), (np.tile(c, (5, 1)),))
    for t in (0.0, 0.3, 1.9, 2.0):
        np.testing.assert_array_equal(arc(t, 0), c)


def test_eval_exponential_arc():
    ts = np.linspace(0, 1, 2001)
    arc = HybridArc((ts,), (2.0 * np.exp(-ts)[:, None],))
    assert abs(eval_arc(arc, HybridTime(math.log(2), 0))[0] - 1.0) < 1e-6


def test_eval_out_of_domain():
    arc = HybridArc((np.array([0.0, 1.0]),), (np.zeros((2, 1)),))
    with pytest.raises(OutOfDomain):
        eval_arc(arc, HybridTime(1.5, 0))
    with pytest.raises(OutOfDomain):
        eval_arc(arc, HybridTime(0.5, 1))


def test_eval_at_jump_disambiguates(ball_pair, ball):
    lam = ball.params["lam"]
    t1, pre, post = ball_pair.arc.jump(0)
    np.testing.assert_allclose(ball_pair.arc(t1, 0), pre)
    np.testing.assert_allclose(ball_pair.arc(t1, 1), post)
    assert abs(pre[0]) < 1e-8
    u = ball.law.jump(pre)
    assert post[1] == pytest.approx(-lam * pre[1] + u[0] + u[1], abs=1e-14)


# --- truncate / remainder -------------------------------------------------------

def test_truncate_subinterval():
    pair = _pair([np.linspace(0, 2, 9)], [np.linspace(0, 2, 9)[:, None]])
    cut = truncate(pair, HybridTime(1.0, 0))
    assert cut.domain.jump_times == (0.0, 1.0)
    assert cut.arc.final_state[0] == pytest.approx(1.0)


def test_truncate_interpolates_between_samples():
    pair = _pair([np.array([0.0, 1.0])], [np.array([[0.0], [4.0]])])
    cut = truncate(pair, HybridTime(0.25, 0))
    assert cut.arc.final_state[0] == pytest.approx(1.0)


def test_truncate_identity(ball_pair):
    assert truncate(ball_pair, ball_pair.arc.final_time) is ball_pair


def test_truncate_at_second_jump_time(ball_pair):
    assert ball_pair.arc.J >= 3
    t2 = ball_pair.arc.times[1][-1]
    cut = truncate(ball_pair, HybridTime(t2, 1))
    assert cut.arc.J == 1
    assert cut.arc.times[-1][-1] == t2
    assert cut.status is TerminalStatus.BUDGET_EXHAUSTED


def test_truncate_outside_domain(ball_pair):
    with pytest.raises(OutOfDomain):
        truncate(ball_pair, HybridTime(1e3, 0))


def test_remainder_reindexes(ball_pair):
    t1 = ball_pair.arc.times[1][0]
    rest = remainder(ball_pair, HybridTime(t1, 1))
    assert rest.arc.J == ball_pair.arc.J - 1
    np.testing.assert_array_equal(rest.arc.final_state, ball_pair.arc.final_state)


# --- inputs / pairs ---------------------------------------------------------------

def test_input_signal_from_functions():
    dims = InputDims(1, 1, 1, 0)
    u = HybridInputSignal.from_functions([0.0, 1.0, 2.0], dims, lambda t, j: [t, -t], [[5.0]], 5)
    assert u.jump_values.shape == (1, 1)
    np.testing.assert_allclose(u.flow_input(0.5, 0), [0.5, -0.5])
    np.testing.assert_allclose(u.jump_input(0), [5.0])


def test_pair_domains_must_match():
    arc = HybridArc((np.array([0.0, 1.0]),), (np.zeros((2, 1)),))
    inp = HybridInputSignal.from_functions([0.0, 2.0], InputDims())
    with pytest.raises(ValueError):
        SolutionPair(arc, inp)


# --- CSV ------------------------------------------------------------------------

def test_csv_round_trip_bit_for_bit(ball_pair):
    buf = io.StringIO()
    write_csv(ball_pair, buf, comment="x")
    text = buf.getvalue()
    assert text.splitlines()[1].startswith("t,j,phase,x0,x1,uD0,uD1")
    assert any(",jump," in ln for ln in text.splitlines())
    back = read_csv(io.StringIO(text))
    assert back.domain.jump_times == ball_pair.domain.jump_times
    for a, b in zip(back.arc.states, ball_pair.arc.states):
        np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(back.input.jump_values, ball_pair.input.jump_values)
    assert back.input.dims == ball_pair.input.dims
    assert back.status is ball_pair.status
    assert back.terminal_time == ball_pair.terminal_time


@given(
    st.lists(st.integers(1, 4), min_size=1, max_size=4),
    st.integers(0, 1),
    st.integers(0, 2),
    st.randoms(use_true_random=False),
)
def test_csv_round_trip_property(counts, mC1, mD1, rnd):
    dims = InputDims(mC1, 1, mD1, 1)
    t = 0.0
    times, states, fv = [], [], []
    for k in counts:
        ts = t + np.cumsum([0.0] + [rnd.uniform(1e-3, 1.0) for _ in range(k - 1)])
        times.append(ts)
        states.append(np.array([[rnd.uniform(-1e6, 1e6), rnd.gauss(0, 1e-9)] for _ in ts]))
        fv.append(np.array([[rnd.uniform(-5, 5) for _ in range(dims.mC)] for _ in ts]).reshape(len(ts), dims.mC))
        t = ts[-1]
    jv = np.array([[rnd.uniform(-3, 3) for _ in range(dims.mD)] for _ in range(len(counts) - 1)]).reshape(-1, dims.mD)
    pair = _pair(times, states, dims, jv, tuple(fv))
    buf = io.StringIO()
    write_csv(pair, buf)
    back = read_csv(io.StringIO(buf.getvalue()))
    assert back.domain.jump_times == pair.domain.jump_times
    assert back.input.dims == dims
    for a, b in zip(back.arc.states, pair.arc.states):
        np.testing.assert_array_equal(a, b)
    for a, b in zip(back.input.flow_values, pair.input.flow_values):
        np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(back.input.jump_values, pair.input.jump_values)
