"""Hybrid time, hybrid arcs, hybrid input signals and solution pairs.

Arcs are stored as dense samples per flow interval. Interval ``j`` holds the
samples of ``[t_j, t_{j+1}] x {j}``; a degenerate interval (``t_j == t_{j+1}``)
holds a single sample. The last sample of interval ``j`` is the pre-jump
state, the first sample of interval ``j + 1`` the post-jump state.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field, replace
from functools import total_ordering
from typing import Iterator, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyDomain, OutOfDomain

# Slack used when deciding whether a time lies inside a stored interval.
TIME_EPS = 1e-12


@total_ordering
@dataclass(frozen=True)
class HybridTime:
    """A point ``(t, j)`` of hybrid time.

    Ordered by ``t + j`` with ties broken by ``j``, then by ``t`` (which only
    matters when ``t + j`` rounds two distinct times together).
    """

    t: float
    j: int = 0

    def __post_init__(self):
        if not self.t >= 0.0:
            raise ValueError(f"flow time must be nonnegative, got {self.t}")
        if self.j < 0:
            raise ValueError(f"jump count must be nonnegative, got {self.j}")

    def key(self) -> tuple[float, int, float]:
        return (self.t + self.j, self.j, self.t)

    def __lt__(self, other: "HybridTime") -> bool:
        if not isinstance(other, HybridTime):
            return NotImplemented
        return self.key() < other.key()

    def __iter__(self):
        yield self.t
        yield self.j


@dataclass(frozen=True)
class HybridTimeDomain:
    """Compact hybrid time domain ``U_j [t_j, t_{j+1}] x {j}``.

    ``jump_times`` holds ``t_0, ..., t_{J+1}``; the number of jumps is
    ``len(jump_times) - 2``.
    """

    jump_times: tuple[float, ...]
    complete: bool = False

    def __post_init__(self):
        ts = tuple(float(t) for t in self.jump_times)
        if len(ts) < 2:
            raise EmptyDomain("a hybrid time domain needs at least t_0 and t_1")
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise ValueError("jump times must be nondecreasing")
        object.__setattr__(self, "jump_times", ts)

    @property
    def J(self) -> int:
        return len(self.jump_times) - 2

    @property
    def start(self) -> HybridTime:
        return HybridTime(self.jump_times[0], 0)

    @property
    def end(self) -> HybridTime:
        return HybridTime(self.jump_times[-1], self.J)

    def interval(self, j: int) -> tuple[float, float]:
        return self.jump_times[j], self.jump_times[j + 1]

    def __contains__(self, point) -> bool:
        t, j = point
        if not 0 <= j <= self.J:
            return False
        lo, hi = self.interval(j)
        return lo - TIME_EPS <= t <= hi + TIME_EPS

    def __iter__(self) -> Iterator[tuple[float, float]]:
        for j in range(self.J + 1):
            yield self.interval(j)


def _as_states(states, n=None) -> np.ndarray:
    arr = np.asarray(states, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1) if n in (None, 1) else arr.reshape(1, -1)
    if n is not None and arr.shape[1] != n:
        raise DimensionMismatch(f"expected state dimension {n}, got {arr.shape[1]}")
    return arr


@dataclass(frozen=True)
class HybridArc:
    """State trajectory sampled on each flow interval.

    ``times[j]`` is a strictly increasing array (one entry for a degenerate
    interval) and ``states[j]`` the matching ``(k, n)`` array of states.
    """

    times: tuple[np.ndarray, ...]
    states: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.times) == 0 or len(self.times) != len(self.states):
            raise EmptyDomain("an arc needs at least one interval")
        times = tuple(np.asarray(t, dtype=float).reshape(-1) for t in self.times)
        n = _as_states(self.states[0]).shape[1]
        states = tuple(_as_states(s, n) for s in self.states)
        for k, (t, x) in enumerate(zip(times, states)):
            if len(t) == 0 or len(t) != len(x):
                raise ValueError(f"interval {k}: {len(t)} times for {len(x)} states")
            if np.any(np.diff(t) <= 0.0):
                raise ValueError(f"interval {k}: sample times must be strictly increasing")
        for k in range(len(times) - 1):
            if times[k][-1] != times[k + 1][0]:
                raise ValueError(f"jump {k}: interval endpoints do not match in t")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)

    @property
    def n(self) -> int:
        return self.states[0].shape[1]

    @property
    def J(self) -> int:
        return len(self.times) - 1

    @property
    def domain(self) -> HybridTimeDomain:
        ts = [t[0] for t in self.times] + [self.times[-1][-1]]
        return HybridTimeDomain(tuple(ts))

    @property
    def initial_state(self) -> np.ndarray:
        return self.states[0][0]

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1][-1]

    @property
    def final_time(self) -> HybridTime:
        return HybridTime(float(self.times[-1][-1]), self.J)

    def jump(self, k: int) -> tuple[float, np.ndarray, np.ndarray]:
        """Time, pre-jump state and post-jump state of jump ``k``."""
        return float(self.times[k][-1]), self.states[k][-1], self.states[k + 1][0]

    def samples(self) -> Iterator[tuple[float, int, np.ndarray]]:
        for j, (ts, xs) in enumerate(zip(self.times, self.states)):
            for t, x in zip(ts, xs):
                yield float(t), j, x

    def __call__(self, t: float, j: int = 0) -> np.ndarray:
        return eval_arc(self, HybridTime(t, j))


def _interp_rows(ts: np.ndarray, rows: np.ndarray, t: float) -> np.ndarray:
    if len(ts) == 1:
        return rows[0].copy()
    k = int(np.searchsorted(ts, t, side="right")) - 1
    k = min(max(k, 0), len(ts) - 2)
    t0, t1 = ts[k], ts[k + 1]
    w = (t - t0) / (t1 - t0)
    w = min(max(w, 0.0), 1.0)
    return (1.0 - w) * rows[k] + w * rows[k + 1]


def eval_arc(arc: HybridArc, at: HybridTime) -> np.ndarray:
    """Linear interpolation of the arc within interval ``at.j``."""
    t, j = at
    if (t, j) not in arc.domain:
        raise OutOfDomain(f"{at} is not in the arc's domain")
    return _interp_rows(arc.times[j], arc.states[j], t)


@dataclass(frozen=True)
class InputDims:
    mC1: int = 0
    mC2: int = 0
    mD1: int = 0
    mD2: int = 0

    @property
    def mC(self) -> int:
        return self.mC1 + self.mC2

    @property
    def mD(self) -> int:
        return self.mD1 + self.mD2

    def __iter__(self):
        return iter((self.mC1, self.mC2, self.mD1, self.mD2))


@dataclass(frozen=True)
class HybridInputSignal:
    """Joint input ``u = (u_C, u_D)`` on a hybrid time domain.

    Flow inputs are sampled per interval (``flow_times[j]``, ``flow_values[j]``
    of shape ``(k, mC)``) and linearly interpolated in between. ``jump_values``
    has one row per jump, applied at ``(t_{j+1}, j)``.
    """

    domain: HybridTimeDomain
    flow_times: tuple[np.ndarray, ...]
    flow_values: tuple[np.ndarray, ...]
    jump_values: np.ndarray
    dims: InputDims = field(default_factory=InputDims)

    def __post_init__(self):
        if len(self.flow_times) != self.domain.J + 1 or len(self.flow_values) != self.domain.J + 1:
            raise ValueError("one flow-input block per interval is required")
        jv = np.asarray(self.jump_values, dtype=float).reshape(self.domain.J, self.dims.mD)
        fts = tuple(np.asarray(t, dtype=float).reshape(-1) for t in self.flow_times)
        fvs = tuple(
            np.asarray(v, dtype=float).reshape(len(t), self.dims.mC)
            for t, v in zip(fts, self.flow_values)
        )
        object.__setattr__(self, "jump_values", jv)
        object.__setattr__(self, "flow_times", fts)
        object.__setattr__(self, "flow_values", fvs)

    def flow_input(self, t: float, j: int) -> np.ndarray:
        if self.dims.mC == 0:
            return np.zeros(0)
        return _interp_rows(self.flow_times[j], self.flow_values[j], t)

    def jump_input(self, k: int) -> np.ndarray:
        return self.jump_values[k]

    @classmethod
    def from_functions(
        cls,
        jump_times: Sequence[float],
        dims: InputDims,
        flow_fn=None,
        jump_inputs=None,
        samples_per_interval: int = 2,
    ) -> "HybridInputSignal":
        """Build a signal from ``flow_fn(t, j) -> u_C`` and a list of jump inputs."""
        domain = HybridTimeDomain(tuple(jump_times))
        fts, fvs = [], []
        for j, (lo, hi) in enumerate(domain):
            ts = np.array([lo]) if hi <= lo else np.linspace(lo, hi, max(samples_per_interval, 2))
            if flow_fn is None:
                vals = np.zeros((len(ts), dims.mC))
            else:
                vals = np.array([np.asarray(flow_fn(t, j), dtype=float).reshape(dims.mC) for t in ts])
            fts.append(ts)
            fvs.append(vals)
        if jump_inputs is None:
            jv = np.zeros((domain.J, dims.mD))
        else:
            jv = np.asarray(jump_inputs, dtype=float).reshape(domain.J, dims.mD)
        return cls(domain, tuple(fts), tuple(fvs), jv, dims)


class TerminalStatus(enum.Enum):
    REACHED_TERMINAL_SET = "reached_terminal_set"
    BUDGET_EXHAUSTED = "budget_exhausted"
    ZENO_TRUNCATED = "zeno_truncated"
    FLOW_STALLED = "flow_stalled"


@dataclass(frozen=True)
class SolutionPair:
    """A state trajectory together with the input that generated it."""

    arc: HybridArc
    input: HybridInputSignal
    status: TerminalStatus = TerminalStatus.BUDGET_EXHAUSTED
    terminal_time: HybridTime | None = None
    branch: str = ""
    system: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.arc.domain.jump_times != self.input.domain.jump_times:
            raise ValueError("arc and input must share one hybrid time domain")
        for ts, ft in zip(self.arc.times, self.input.flow_times):
            if len(ts) != len(ft) or np.any(ts != ft):
                raise ValueError("flow inputs must be sampled at the arc's sample times")

    @property
    def domain(self) -> HybridTimeDomain:
        return self.arc.domain

    def flow_samples(self) -> Iterator[tuple[float, int, np.ndarray, np.ndarray]]:
        for j, (ts, xs, us) in enumerate(zip(self.arc.times, self.arc.states, self.input.flow_values)):
            for t, x, u in zip(ts, xs, us):
                yield float(t), j, x, u

    def jumps(self) -> Iterator[tuple[float, int, np.ndarray, np.ndarray, np.ndarray]]:
        """Yield ``(t, j, pre-jump state, post-jump state, u_D)`` per jump."""
        for k in range(self.arc.J):
            t, pre, post = self.arc.jump(k)
            yield t, k, pre, post, self.input.jump_values[k]


def _cut_interval(ts, xs, us, t_cut):
    keep = ts < t_cut - TIME_EPS
    t_new = ts[keep]
    x_new = xs[keep]
    u_new = us[keep]
    if len(t_new) and abs(t_new[-1] - t_cut) <= TIME_EPS:
        return t_new, x_new, u_new
    x_c = _interp_rows(ts, xs, t_cut)
    u_c = _interp_rows(ts, us, t_cut) if us.shape[1] else np.zeros(0)
    return (
        np.append(t_new, t_cut),
        np.vstack([x_new, x_c[None, :]]),
        np.vstack([u_new, u_c.reshape(1, -1)]),
    )


def truncate(pair: SolutionPair, upto: HybridTime) -> SolutionPair:
    """Restrict a solution pair to hybrid times not after ``upto``.

    The sample at ``upto`` is included, interpolated linearly when it falls
    between stored samples.
    """
    t_cut, j_cut = upto
    if (t_cut, j_cut) not in pair.domain:
        raise OutOfDomain(f"{upto} is outside the stored domain")
    if upto == pair.arc.final_time or (
        j_cut == pair.arc.J and t_cut >= pair.arc.times[-1][-1] - TIME_EPS
    ):
        return pair
    times = list(pair.arc.times[: j_cut + 1])
    states = list(pair.arc.states[: j_cut + 1])
    fvals = list(pair.input.flow_values[: j_cut + 1])
    t_last, x_last, u_last = _cut_interval(times[-1], states[-1], fvals[-1], t_cut)
    times[-1], states[-1], fvals[-1] = t_last, x_last, u_last
    arc = HybridArc(tuple(times), tuple(states))
    inp = HybridInputSignal(
        arc.domain, tuple(times), tuple(fvals), pair.input.jump_values[:j_cut], pair.input.dims
    )
    return replace(
        pair,
        arc=arc,
        input=inp,
        status=TerminalStatus.BUDGET_EXHAUSTED,
        terminal_time=None,
    )


def remainder(pair: SolutionPair, start: HybridTime) -> SolutionPair:
    """The part of a solution pair from ``start`` on, with jumps re-indexed from 0."""
    t0, j0 = start
    if (t0, j0) not in pair.domain:
        raise OutOfDomain(f"{start} is outside the stored domain")
    ts, xs, us = pair.arc.times[j0], pair.arc.states[j0], pair.input.flow_values[j0]
    keep = ts > t0 + TIME_EPS
    x0 = _interp_rows(ts, xs, t0)
    u0 = _interp_rows(ts, us, t0) if us.shape[1] else np.zeros(0)
    first_t = np.concatenate([[t0], ts[keep]])
    first_x = np.vstack([x0[None, :], xs[keep]])
    first_u = np.vstack([u0.reshape(1, -1), us[keep]])
    times = (first_t,) + pair.arc.times[j0 + 1 :]
    states = (first_x,) + pair.arc.states[j0 + 1 :]
    fvals = (first_u,) + pair.input.flow_values[j0 + 1 :]
    arc = HybridArc(times, states)
    inp = HybridInputSignal(arc.domain, times, fvals, pair.input.jump_values[j0:], pair.input.dims)
    term = pair.terminal_time
    if term is not None:
        term = HybridTime(term.t, term.j - j0)
    return replace(pair, arc=arc, input=inp, terminal_time=term)


# --- trajectory CSV ---------------------------------------------------------

def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def csv_header(n: int, dims: InputDims) -> list[str]:
    return (
        ["t", "j", "phase"]
        + [f"x{i}" for i in range(n)]
        + [f"uC{i}" for i in range(dims.mC)]
        + [f"uD{i}" for i in range(dims.mD)]
    )


def write_csv(pair: SolutionPair, fh, comment: str | None = None) -> None:
    """Write a solution pair as trajectory CSV.

    Columns: ``t, j, phase, x0..x{n-1}, uC0..uC{mC-1}, uD0..uD{mD-1}``.
    Flow rows carry the state and flow input of every stored sample. A jump
    row follows the last flow row of interval ``j - 1``: it carries the
    post-jump state with its jump count ``j`` and the jump input that was
    applied at ``(t, j - 1)``. Unused input columns are left empty.
    """
    dims = pair.input.dims
    if comment:
        fh.write(f"# {comment}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(csv_header(pair.arc.n, dims))
    blank_c = [""] * dims.mC
    blank_d = [""] * dims.mD
    for j, (ts, xs, us) in enumerate(zip(pair.arc.times, pair.arc.states, pair.input.flow_values)):
        if j > 0:
            ud = pair.input.jump_values[j - 1]
            w.writerow([_fmt(ts[0]), j, "jump"] + [_fmt(v) for v in xs[0]] + blank_c + [_fmt(v) for v in ud])
        for t, x, u in zip(ts, xs, us):
            w.writerow([_fmt(t), j, "flow"] + [_fmt(v) for v in x] + [_fmt(v) for v in u] + blank_d)
    meta = {"status": pair.status.value, "branch": pair.branch, "mC1": str(dims.mC1), "mD1": str(dims.mD1)}
    if pair.terminal_time is not None:
        meta["terminal_t"] = _fmt(pair.terminal_time.t)
        meta["terminal_j"] = str(pair.terminal_time.j)
    fh.write("# end " + " ".join(f"{k}={v}" for k, v in meta.items() if v != "") + "\n")


def read_csv(fh) -> SolutionPair:
    """Inverse of :func:`write_csv`."""
    lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    meta = {}
    body = []
    for ln in lines:
        if ln.startswith("# end"):
            for item in ln[len("# end"):].split():
                k, _, v = item.partition("=")
                meta[k] = v
        elif not ln.startswith("#"):
            body.append(ln)
    reader = csv.reader(io.StringIO("\n".join(body)))
    header = next(reader)
    n = sum(1 for h in header if h.startswith("x"))
    mC = sum(1 for h in header if h.startswith("uC"))
    mD = sum(1 for h in header if h.startswith("uD"))
    mC1 = int(meta.get("mC1", mC))
    mD1 = int(meta.get("mD1", mD))
    dims = InputDims(mC1, mC - mC1, mD1, mD - mD1)
    times, states, fvals, jumps = [], [], [], []
    for row in reader:
        t, j, phase = float(row[0]), int(row[1]), row[2]
        x = [float(v) for v in row[3 : 3 + n]]
        if phase == "jump":
            jumps.append([float(v) for v in row[3 + n + mC : 3 + n + mC + mD]])
            continue
        while len(times) <= j:
            times.append([])
            states.append([])
            fvals.append([])
        times[j].append(t)
        states[j].append(x)
        fvals[j].append([float(v) for v in row[3 + n : 3 + n + mC]])
    arc = HybridArc(
        tuple(np.array(t) for t in times),
        tuple(np.array(x, dtype=float).reshape(len(x), n) for x in states),
    )
    inp = HybridInputSignal(
        arc.domain,
        arc.times,
        tuple(np.array(u, dtype=float).reshape(len(u), mC) for u in fvals),
        np.array(jumps, dtype=float).reshape(len(jumps), mD),
        dims,
    )
    status = TerminalStatus(meta.get("status", TerminalStatus.BUDGET_EXHAUSTED.value))
    term = None
    if "terminal_t" in meta:
        term = HybridTime(float(meta["terminal_t"]), int(meta["terminal_j"]))
    return SolutionPair(arc, inp, status, term, meta.get("branch", ""))
