"""Solution pairs of hybrid systems by fixed-step RK4 with event localization."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .domain import (
    HybridArc,
    HybridInputSignal,
    HybridTime,
    SolutionPair,
    TerminalStatus,
)
from .errors import BranchLimitExceeded, DimensionMismatch, InfeasibleInput, InvalidInitialState
from .system import FeedbackLaw, GameSystem, close_loop


class Policy(enum.Enum):
    JUMP = "jump"
    FLOW = "flow"
    BOTH = "both"


@dataclass(frozen=True)
class SimConfig:
    dt_max: float = 1e-3
    event_tol: float = 1e-9
    t_budget: float = 10.0
    j_budget: int = 1000
    min_flow_interval: float = 1e-7
    policy: Policy = Policy.JUMP
    max_branches: int = 16
    probe_step: float = 1e-6

    def __post_init__(self):
        if min(self.dt_max, self.event_tol, self.min_flow_interval, self.probe_step) <= 0:
            raise ValueError("tolerances must be positive")
        if self.j_budget < 0 or self.t_budget < 0:
            raise ValueError("budgets must be nonnegative")
        if isinstance(self.policy, str):
            object.__setattr__(self, "policy", Policy(self.policy))


def rk4_step(f: Callable, x: np.ndarray, h: float) -> np.ndarray:
    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _bisect(pred: Callable[[float], bool], lo: float, hi: float, tol: float) -> tuple[float, float]:
    """Shrink ``[lo, hi]`` with ``pred(lo)`` false and ``pred(hi)`` true to width ``tol``."""
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return lo, hi


class _Stop(enum.Enum):
    TERMINAL = 0
    JUMP = 1
    EXIT = 2


class _Run:
    """One deterministic simulation following a string of overlap decisions."""

    def __init__(self, sys: GameSystem, cfg: SimConfig, decisions: str, enumerate_: bool):
        self.sys = sys
        self.cfg = cfg
        self.decisions = decisions
        self.enumerate = enumerate_
        self.taken = ""
        self.spawned: list[str] = []
        u0, fmap = np.zeros(sys.dims.mC), sys.flow_map
        self.f = lambda x: fmap(x, u0)

    # -- membership helpers ----------------------------------------------
    def in_X(self, x):
        X = self.sys.terminal_set
        return not X.is_empty and X.contains(x)

    def in_C(self, x):
        return self.sys.flow_set.contains(x)

    def in_C_strict(self, x):
        C = self.sys.flow_set
        if C.predicate is not None:
            return C.contains(x)
        return any(p.contains(x, C.eq_tol, 0.0) for p in C.pieces)

    def in_D(self, x):
        return self.sys.jump_set.contains(x)

    def can_flow(self, x) -> bool:
        if not self.in_C(x):
            return False
        return self.in_C(rk4_step(self.f, x, self.cfg.probe_step))

    def choose(self, x) -> str:
        """Return 'stop', 'jump', 'flow' or 'stall' at state ``x``."""
        if self.in_X(x):
            return "stop"
        d = self.in_D(x)
        c = self.can_flow(x)
        if d and c:
            k = len(self.taken)
            if k < len(self.decisions):
                bit = self.decisions[k]
            elif self.enumerate:
                bit = "0"
                self.spawned.append(self.taken + "1")
            else:
                bit = "1" if self.cfg.policy is Policy.JUMP else "0"
            self.taken += bit
            return "jump" if bit == "1" else "flow"
        if d:
            return "jump"
        if c:
            return "flow"
        return "stall"

    # -- flow ---------------------------------------------------------------
    def _d_event(self, xa, xb, start_in_D, step):
        """Earliest entry into D within the step, as ``(s, state)`` or None."""
        D = self.sys.jump_set
        if D.is_empty or start_in_D:
            return None
        tol = self.cfg.event_tol
        best = None
        if D.predicate is not None:
            if D.contains(xb):
                lo, hi = _bisect(lambda s: D.contains(step(s)), 0.0, self._h, tol)
                best = (hi, step(hi))
            return best
        for piece in D.pieces:
            if piece.eqs:
                g = piece.eqs[0]
                ga, gb = g(xa), g(xb)
                if ga == 0.0 or ga * gb > 0.0:
                    continue
                sa = math.copysign(1.0, ga)
                lo, hi = _bisect(lambda s: sa * g(step(s)) <= 0.0, 0.0, self._h, tol)
                xl, xh = step(lo), step(hi)
                s, xs = (lo, xl) if abs(g(xl)) <= abs(g(xh)) else (hi, xh)
                xs = D.project(xs) if D.data.get("project") and all(abs(e(xs)) <= D.eq_tol for e in piece.eqs) else xs
                if not piece.contains(xs, D.eq_tol, D.ineq_tol):
                    continue
            else:
                if not piece.contains(xb, D.eq_tol, D.ineq_tol):
                    continue
                lo, hi = _bisect(lambda s: piece.contains(step(s), D.eq_tol, D.ineq_tol), 0.0, self._h, tol)
                s, xs = hi, step(hi)
            if best is None or s < best[0]:
                best = (s, xs)
        return best

    def flow(self, t0: float, x0: np.ndarray, t_end: float):
        """Integrate from ``(t0, x0)``; return samples and the reason flow ended."""
        cfg = self.cfg
        ts = [t0]
        xs = [x0]
        t, x = t0, x0
        start_in_D = self.in_D(x0)
        while True:
            if t >= t_end - 1e-15:
                return ts, xs, None
            h = min(cfg.dt_max, t_end - t)
            self._h = h
            xa = x
            step = lambda s, xa=xa: rk4_step(self.f, xa, s) if s > 0 else xa
            xb = step(h)
            events = []
            if not self.sys.terminal_set.is_empty and self.in_X(xb):
                lo, hi = _bisect(lambda s: self.in_X(step(s)), 0.0, h, cfg.event_tol)
                events.append((hi, _Stop.TERMINAL, step(hi)))
            d_ev = self._d_event(xa, xb, start_in_D, step)
            if d_ev is not None:
                events.append((d_ev[0], _Stop.JUMP, d_ev[1]))
            if not self.in_C_strict(xb):
                lo, hi = _bisect(lambda s: not self.in_C_strict(step(s)), 0.0, h, cfg.event_tol)
                xe = step(lo)
                D = self.sys.jump_set
                if not D.is_empty and D.contains(xe):
                    # Leaving C through D: a jump point on the boundary.
                    events.append((lo, _Stop.JUMP, D.project(xe)))
                else:
                    events.append((lo, _Stop.EXIT, xe))
            if events:
                first = min(e[0] for e in events)
                window = [e for e in events if e[0] <= first + 2.0 * cfg.event_tol]
                s, kind, xe = min(window, key=lambda e: e[1].value)
                if s > 0.0:
                    ts.append(t + s)
                    xs.append(xe)
                else:
                    xs[-1] = xe
                return ts, xs, kind
            t, x = t + h, xb
            ts.append(t)
            xs.append(x)
            if start_in_D and not self.in_D(x):
                start_in_D = False


def _assemble(sys: GameSystem, times, states, status, term, branch) -> SolutionPair:
    # Drop duplicated sample times created when an event lands on a grid point.
    tt, xx = [], []
    for ts, xs in zip(times, states):
        t_arr = [ts[0]]
        x_arr = [np.asarray(xs[0], dtype=float)]
        for t, x in zip(ts[1:], xs[1:]):
            if t <= t_arr[-1]:
                t_arr[-1] = t_arr[-1]
                x_arr[-1] = np.asarray(x, dtype=float)
            else:
                t_arr.append(t)
                x_arr.append(np.asarray(x, dtype=float))
        tt.append(np.array(t_arr))
        xx.append(np.array(x_arr).reshape(len(x_arr), sys.n))
    arc = HybridArc(tuple(tt), tuple(xx))
    law = sys.law
    base = sys.open_loop if sys.open_loop is not None else sys
    dims = base.dims
    if law is not None:
        fv = tuple(np.array([law.flow(x) for x in X]).reshape(len(X), dims.mC) for X in xx)
        jv = np.array([law.jump(xx[k][-1]) for k in range(len(xx) - 1)]).reshape(len(xx) - 1, dims.mD)
    else:
        fv = tuple(np.zeros((len(X), dims.mC)) for X in xx)
        jv = np.zeros((len(xx) - 1, dims.mD))
    inp = HybridInputSignal(arc.domain, tuple(tt), fv, jv, dims)
    return SolutionPair(arc, inp, status, term, branch, system=base)


def _simulate_one(sys, x0, cfg, decisions, enumerate_):
    runner = _Run(sys, cfg, decisions, enumerate_)
    times, states, status, term = _simulate_intervals(runner, x0)
    return runner, _assemble(sys, times, states, status, term, runner.taken)


def _simulate_intervals(r: _Run, x0: np.ndarray):
    """Interval bookkeeping: every jump closes the current interval."""
    cfg = r.cfg
    times: list[list[float]] = [[0.0]]
    states: list[list[np.ndarray]] = [[x0]]
    t, x = 0.0, x0
    first = True
    stuck = 0
    while True:
        action = r.choose(x)
        if first and action == "stall":
            raise InvalidInitialState(f"x0={x0.tolist()} is neither in the flow set nor in the jump set")
        first = False
        if action == "stop":
            return times, states, TerminalStatus.REACHED_TERMINAL_SET, HybridTime(t, len(times) - 1)
        if action == "stall":
            return times, states, TerminalStatus.FLOW_STALLED, None
        if action == "jump":
            if len(times) - 1 >= cfg.j_budget:
                return times, states, TerminalStatus.BUDGET_EXHAUSTED, None
            x = r.sys.G(x)
            times.append([t])
            states.append([x])
            continue
        if t >= cfg.t_budget:
            return times, states, TerminalStatus.BUDGET_EXHAUSTED, None
        ts, xs, why = r.flow(t, x, cfg.t_budget)
        if len(ts) == 1:
            # Event at the starting point: adopt the localized state.
            states[-1][-1] = xs[0]
            stuck += 1
            if stuck > 2:
                return times, states, TerminalStatus.FLOW_STALLED, None
        else:
            stuck = 0
        times[-1].extend(ts[1:])
        states[-1].extend(xs[1:])
        t, x = times[-1][-1], states[-1][-1]
        if why is None:
            return times, states, TerminalStatus.BUDGET_EXHAUSTED, None
        if why is _Stop.TERMINAL:
            return times, states, TerminalStatus.REACHED_TERMINAL_SET, HybridTime(t, len(times) - 1)
        j = len(times) - 1
        span = times[-1][-1] - times[-1][0]
        if j > 0 and 0.0 < span < cfg.min_flow_interval:
            return times, states, TerminalStatus.ZENO_TRUNCATED, None


def _as_state(x0, n: int) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.size != n:
        raise DimensionMismatch(f"initial state has {x0.size} entries, the system has {n}")
    return x0


def simulate(sys: GameSystem, x0, cfg: SimConfig | None = None, law: FeedbackLaw | None = None) -> list[SolutionPair]:
    """Maximal solutions of the closed-loop system from ``x0``.

    ``sys`` is either closed-loop already or is closed with ``law``. Under
    ``Policy.BOTH`` every overlap of flow and jump possibilities spawns a
    branch; branches are labelled by their decision bits (1 = jump) and
    returned sorted by label.
    """
    cfg = cfg or SimConfig()
    if law is not None:
        sys = close_loop(sys, law)
    x0 = _as_state(x0, sys.n)
    if cfg.policy is not Policy.BOTH:
        _, pair = _simulate_one(sys, x0, cfg, "", False)
        return [pair]
    results: dict[str, SolutionPair] = {}
    queue = [""]
    while queue:
        bits = queue.pop(0)
        runner, pair = _simulate_one(sys, x0, cfg, bits, True)
        if pair.branch in results:
            continue
        results[pair.branch] = pair
        if len(results) > cfg.max_branches:
            raise BranchLimitExceeded(f"more than {cfg.max_branches} solutions from x0={x0.tolist()}")
        queue.extend(runner.spawned)
    return [results[k] for k in sorted(results)]


def simulate_open_loop(sys: GameSystem, x0, u: HybridInputSignal | None, cfg: SimConfig | None = None) -> SolutionPair:
    """The solution pair driven by a given input; its domain fixes the jump times."""
    cfg = cfg or SimConfig()
    if u is None:
        raise InfeasibleInput("input signal has an empty domain")
    if tuple(u.dims) != tuple(sys.dims):
        raise InfeasibleInput("input dimensions do not match the system")
    x = _as_state(x0, sys.n)
    times, states, fvals = [], [], []
    for j, (lo, hi) in enumerate(u.domain):
        k = max(1, int(math.ceil((hi - lo) / cfg.dt_max - 1e-12))) if hi > lo else 0
        ts = np.linspace(lo, hi, k + 1) if k else np.array([lo])
        xs = [x]
        for a, b in zip(ts[:-1], ts[1:]):
            h = b - a
            f = lambda s, y: sys.F(y, u.flow_input(s, j))
            k1 = f(a, x)
            k2 = f(a + h / 2, x + h / 2 * k1)
            k3 = f(a + h / 2, x + h / 2 * k2)
            k4 = f(b, x + h * k3)
            x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            if not sys.flow_set.contains(x):
                raise InfeasibleInput(f"state left the flow set at t={b}, j={j}")
            xs.append(x)
        if k and not sys.flow_set.contains(xs[0]):
            raise InfeasibleInput(f"flow starts outside the flow set at t={lo}, j={j}")
        times.append(ts)
        states.append(np.array(xs))
        fvals.append(np.array([u.flow_input(t, j) for t in ts]).reshape(len(ts), sys.dims.mC))
        if j < u.domain.J:
            if not sys.jump_set.contains(x):
                raise InfeasibleInput(f"scheduled jump at t={hi}, j={j} from outside the jump set")
            x = sys.G(x, u.jump_input(j))
    arc = HybridArc(tuple(times), tuple(states))
    inp = HybridInputSignal(arc.domain, tuple(times), tuple(fvals), u.jump_values, u.dims)
    status = TerminalStatus.BUDGET_EXHAUSTED
    term = None
    X = sys.terminal_set
    if not X.is_empty and X.contains(arc.final_state):
        status, term = TerminalStatus.REACHED_TERMINAL_SET, arc.final_time
    return SolutionPair(arc, inp, status, term, system=sys)
