"""Pointwise HJBI residuals, Isaacs gaps, feedback synthesis and saddle sweeps."""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .certificate import ValueCertificate
from .cost import StageCosts, evaluate_cost
from .errors import HygameError, NoInputBox, ResidualTooLarge, SingularRv
from .simulator import Policy, SimConfig, simulate
from .system import FeedbackLaw, GameSystem

SECOND_ORDER_TOL = 1e-12


class Order(enum.Enum):
    MINMAX = "minmax"
    MAXMIN = "maxmin"


@dataclass(frozen=True)
class GridSpec:
    """Tensor grid over a state box plus the input box for numeric search.

    ``box`` is a sequence of ``(lo, hi)``; a coordinate with ``lo == hi`` is
    held fixed (one point). ``input_box`` is either one ``(lo, hi)`` pair
    applied to every input coordinate or a list of pairs.
    """

    box: tuple
    points: int | Sequence[int] = 50
    input_box: Optional[tuple] = None
    input_points: int = 201

    def __post_init__(self):
        box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        if any(lo > hi for lo, hi in box):
            raise ValueError("grid box needs lo <= hi")
        object.__setattr__(self, "box", box)
        pts = self.points if isinstance(self.points, (list, tuple)) else [self.points] * len(box)
        if any(p < 1 for p in pts):
            raise ValueError("grid needs at least one point per coordinate")
        object.__setattr__(self, "points", tuple(int(p) for p in pts))
        if self.input_points < 2:
            raise ValueError("input grid needs at least two points")

    def states(self) -> np.ndarray:
        axes = [
            np.array([lo]) if lo == hi else np.linspace(lo, hi, max(p, 2))
            for (lo, hi), p in zip(self.box, self.points)
        ]
        return np.array(list(itertools.product(*axes)), dtype=float)

    def input_axes(self, m: int) -> list[np.ndarray]:
        if self.input_box is None:
            raise NoInputBox("numeric min-max needs an input box")
        ib = self.input_box
        if np.ndim(ib) == 1:
            ib = [ib] * m
        return [np.linspace(lo, hi, self.input_points) for lo, hi in ib[:m]]


@dataclass
class MinMaxResult:
    value: float
    u1: np.ndarray
    u2: np.ndarray
    method: str
    M: Optional[np.ndarray] = None

    @property
    def u(self) -> np.ndarray:
        return np.concatenate([self.u1, self.u2])


def identify_quadratic(f: Callable[[np.ndarray], float], m: int, s: float = 1.0):
    """Coefficients ``(k, c, M)`` with ``f(u) = k + c'u + u'Mu`` for quadratic ``f``."""
    k = float(f(np.zeros(m)))
    c = np.zeros(m)
    M = np.zeros((m, m))
    fp = np.zeros(m)
    for i in range(m):
        e = np.zeros(m)
        e[i] = s
        fp[i] = f(e)
        fm = f(-e)
        c[i] = (fp[i] - fm) / (2 * s)
        M[i, i] = (fp[i] + fm - 2 * k) / (2 * s * s)
    for i in range(m):
        for j in range(i + 1, m):
            e = np.zeros(m)
            e[i] = e[j] = s
            val = f(e)
            M[i, j] = M[j, i] = (val - k - s * c[i] - s * c[j] - s * s * (M[i, i] + M[j, j])) / (2 * s * s)
    return k, c, M


def _pd(M) -> bool:
    return M.size == 0 or np.linalg.eigvalsh(0.5 * (M + M.T)).min() > SECOND_ORDER_TOL


def _quadratic_saddle(k, c, M, m1, order: Order) -> Optional[MinMaxResult]:
    """Saddle of a quadratic if the second-order conditions for ``order`` hold."""
    m = len(c)
    M11, M12, M22 = M[:m1, :m1], M[:m1, m1:], M[m1:, m1:]
    if order is Order.MINMAX:
        if not _pd(-M22):
            return None
        schur = M11 - (M12 @ np.linalg.solve(M22, M12.T) if m - m1 else 0.0)
        if not _pd(schur):
            return None
    else:
        if not _pd(M11):
            return None
        schur = M22 - (M12.T @ np.linalg.solve(M11, M12) if m1 else 0.0)
        if not _pd(-schur):
            return None
    if m == 0:
        return MinMaxResult(k, np.zeros(0), np.zeros(0), "analytic", M)
    u = np.linalg.solve(2.0 * M, -c)
    val = float(k + c @ u + u @ M @ u)
    return MinMaxResult(val, u[:m1], u[m1:], "analytic", M)


def _grid_minmax(f, m1, m2, axes, order: Order) -> MinMaxResult:
    """Nested search; ties resolved to the lowest grid index."""
    g1 = list(itertools.product(*axes[:m1])) if m1 else [()]
    g2 = list(itertools.product(*axes[m1:m1 + m2])) if m2 else [()]
    vals = np.array([[f(np.array(a + b, dtype=float)) for b in g2] for a in g1])
    if order is Order.MINMAX:
        inner = vals.max(axis=1)
        i = int(np.argmin(inner))
        j = int(np.argmax(vals[i]))
    else:
        inner = vals.min(axis=0)
        j = int(np.argmax(inner))
        i = int(np.argmin(vals[:, j]))
    return MinMaxResult(float(vals[i, j]), np.array(g1[i], dtype=float), np.array(g2[j], dtype=float), "grid")


def _solve(f, m1, m2, analytic: bool, order: Order, grid: Optional[GridSpec]) -> MinMaxResult:
    if analytic:
        k, c, M = identify_quadratic(f, m1 + m2)
        res = _quadratic_saddle(k, c, M, m1, order)
        if res is not None:
            return res
    if m1 + m2 == 0:
        return MinMaxResult(float(f(np.zeros(0))), np.zeros(0), np.zeros(0), "analytic")
    if grid is None:
        raise NoInputBox("second-order conditions fail or no structure; numeric min-max needs an input box")
    axes = grid.input_axes(m1 + m2) if m1 + m2 else []
    return _grid_minmax(f, m1, m2, axes, order)


def flow_objective(x, V: ValueCertificate, sys: GameSystem, costs: StageCosts):
    g = V.grad(x)
    return lambda u: costs.L_C(x, u) + float(g @ sys.F(x, u))


def jump_objective(x, V: ValueCertificate, sys: GameSystem, costs: StageCosts):
    return lambda u: costs.L_D(x, u) + V(sys.G(x, u))


def hamiltonian_minmax(x, V: ValueCertificate, sys: GameSystem, costs: StageCosts,
                       order: Order = Order.MINMAX, grid: GridSpec | None = None,
                       numeric: bool = False) -> MinMaxResult:
    """``min_u1 max_u2 L_C + <grad V, F>`` (or the reverse order)."""
    x = np.asarray(x, dtype=float)
    f = flow_objective(x, V, sys, costs)
    analytic = not numeric and costs.input_quadratic and sys.flow_affine is not None
    return _solve(f, sys.dims.mC1, sys.dims.mC2, analytic, order, grid)


def jump_minmax(x, V: ValueCertificate, sys: GameSystem, costs: StageCosts,
                order: Order = Order.MINMAX, grid: GridSpec | None = None,
                numeric: bool = False) -> MinMaxResult:
    """``min_u1 max_u2 L_D + V(G)`` (or the reverse order)."""
    x = np.asarray(x, dtype=float)
    f = jump_objective(x, V, sys, costs)
    analytic = not numeric and costs.input_quadratic and V.is_quadratic and sys.jump_affine is not None
    res = _solve(f, sys.dims.mD1, sys.dims.mD2, analytic, order, grid)
    if res.M is not None and res.M.size and np.linalg.cond(res.M) > 1e12:
        raise SingularRv("jump input Hessian is singular")
    return res


def _jump_points(sys: GameSystem, pts: np.ndarray) -> np.ndarray:
    D = sys.jump_set
    if D.is_empty:
        return np.zeros((0, sys.n))
    cand = pts
    if D.data.get("project") is not None:
        cand = np.array([D.project(x) for x in pts])
        cand = np.unique(np.round(cand, 14), axis=0)
    keep = [x for x in cand if D.contains(x)]
    return np.array(keep, dtype=float).reshape(len(keep), sys.n)


@dataclass
class HJBIReport:
    flow_points: np.ndarray
    flow_residuals: np.ndarray
    jump_points: np.ndarray
    jump_residuals: np.ndarray
    isaacs_gaps: np.ndarray
    methods: set = field(default_factory=set)

    @property
    def max_flow_residual(self) -> float:
        return float(np.abs(self.flow_residuals).max()) if self.flow_residuals.size else 0.0

    @property
    def max_jump_residual(self) -> float:
        return float(np.abs(self.jump_residuals).max()) if self.jump_residuals.size else 0.0

    @property
    def max_isaacs_gap(self) -> float:
        return float(self.isaacs_gaps.max()) if self.isaacs_gaps.size else 0.0

    def passed(self, tol: float = 1e-6) -> bool:
        return max(self.max_flow_residual, self.max_jump_residual, self.max_isaacs_gap) <= tol

    def to_dict(self, tol: float = 1e-6) -> dict:
        return {
            "max_flow_residual": self.max_flow_residual,
            "max_jump_residual": self.max_jump_residual,
            "max_isaacs_gap": self.max_isaacs_gap,
            "n_flow_points": int(len(self.flow_points)),
            "n_jump_points": int(len(self.jump_points)),
            "methods": sorted(self.methods),
            "tol": tol,
            "passed": self.passed(tol),
        }


def check_hjbi(V: ValueCertificate, sys: GameSystem, costs: StageCosts, grid: GridSpec,
               numeric: bool = False) -> HJBIReport:
    """HJBI residuals on the flow-set and jump-set points of a grid.

    Jump-set points come from projecting the grid onto thin jump sets.
    """
    pts = grid.states()
    fp = np.array([x for x in pts if sys.flow_set.contains(x)]).reshape(-1, sys.n)
    jp = _jump_points(sys, pts)
    fr, jr, gaps, methods = [], [], [], set()
    for x in fp:
        a = hamiltonian_minmax(x, V, sys, costs, Order.MINMAX, grid, numeric)
        b = hamiltonian_minmax(x, V, sys, costs, Order.MAXMIN, grid, numeric)
        fr.append(a.value)
        gaps.append(abs(a.value - b.value))
        methods.add(a.method)
    for x in jp:
        a = jump_minmax(x, V, sys, costs, Order.MINMAX, grid, numeric)
        b = jump_minmax(x, V, sys, costs, Order.MAXMIN, grid, numeric)
        jr.append(a.value - V(x))
        gaps.append(abs(a.value - b.value))
        methods.add(a.method)
    return HJBIReport(fp, np.array(fr), jp, np.array(jr), np.array(gaps), methods)


def synthesize_feedback(V: ValueCertificate, sys: GameSystem, costs: StageCosts, grid: GridSpec,
                        tol: float = 1e-6) -> FeedbackLaw:
    """Min-max selectors as a feedback law, after checking HJBI on the grid."""
    rep = check_hjbi(V, sys, costs, grid)
    if not rep.passed(tol):
        raise ResidualTooLarge(
            f"HJBI residuals too large (flow {rep.max_flow_residual:.3e}, jump {rep.max_jump_residual:.3e})"
        )
    cache: dict = {}

    def sel(kind):
        def get(x):
            key = (kind, np.asarray(x, dtype=float).tobytes())
            if key not in cache:
                if len(cache) > 4096:
                    cache.clear()
                fn = hamiltonian_minmax if kind == "C" else jump_minmax
                cache[key] = fn(x, V, sys, costs, Order.MINMAX, grid)
            return cache[key]
        return get

    fc, fd = sel("C"), sel("D")
    d = sys.dims
    return FeedbackLaw(
        d,
        (lambda x: fc(x).u1) if d.mC1 else None,
        (lambda x: fc(x).u2) if d.mC2 else None,
        (lambda x: fd(x).u1) if d.mD1 else None,
        (lambda x: fd(x).u2) if d.mD2 else None,
    )


# --- equivalent conditions ----------------------------------------------------

@dataclass
class InequalityResult:
    name: str
    worst: float
    passed: bool
    label: str
    count: int


@dataclass
class EquivalenceReport:
    results: dict

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results.values())

    def to_dict(self) -> dict:
        return {
            k: {"worst": r.worst, "passed": r.passed, "label": r.label, "count": r.count}
            for k, r in self.results.items()
        } | {"passed": self.passed}


def _deviations(center: np.ndarray, lo: float, hi: float, k: int) -> list[np.ndarray]:
    m = len(center)
    if m == 0:
        return []
    axis = np.linspace(lo, hi, k)
    if m <= 2:
        return [center + np.array(d) for d in itertools.product(axis, repeat=m)]
    rng = np.random.default_rng(0)
    return [center + rng.uniform(lo, hi, m) for _ in range(k * k)]


def check_equivalent_conditions(V: ValueCertificate, sys: GameSystem, costs: StageCosts, law: FeedbackLaw,
                                grid: GridSpec, deviation_box=(-1.0, 1.0), deviation_points: int = 21,
                                tol: float = 1e-7) -> EquivalenceReport:
    """The six pointwise conditions characterizing a saddle-point law.

    (a) flow equality at kappa, (b) >= 0 under player-1 flow deviations,
    (c) <= 0 under player-2 flow deviations, (d)-(f) the jump analogues
    measured against ``V(x)``. Deviations are ``kappa + delta`` with
    ``delta`` on a grid over ``deviation_box``; a condition is labelled
    "sampled+convexity" when the objective is a quadratic whose curvature in
    the deviating player's input has the right sign at every point.
    """
    pts = grid.states()
    fp = [x for x in pts if sys.flow_set.contains(x)]
    jp = list(_jump_points(sys, pts))
    lo, hi = deviation_box
    d = sys.dims
    worst = {k: 0.0 for k in "abcdef"}
    count = {k: 0 for k in "abcdef"}
    convex = {k: True for k in "abcdef"}

    def record(key, r, bad):
        count[key] += 1
        worst[key] = max(worst[key], bad)

    for section, points, objective, split, structured in (
        ("abc", fp, flow_objective, (d.mC1, d.mC2), costs.input_quadratic and sys.flow_affine is not None),
        ("def", jp, None, (d.mD1, d.mD2), costs.input_quadratic and V.is_quadratic and sys.jump_affine is not None),
    ):
        eq, low, up = section
        m1, m2 = split
        for x in points:
            if objective is not None:
                f = objective(x, V, sys, costs)
                k1, k2 = law.C1(x), law.C2(x)
                base = 0.0
            else:
                f = jump_objective(x, V, sys, costs)
                k1, k2 = law.D1(x), law.D2(x)
                base = V(x)
            r0 = f(np.concatenate([k1, k2])) - base
            record(eq, r0, abs(r0))
            for u1 in _deviations(k1, lo, hi, deviation_points):
                r = f(np.concatenate([u1, k2])) - base
                record(low, r, max(0.0, -r))
            for u2 in _deviations(k2, lo, hi, deviation_points):
                r = f(np.concatenate([k1, u2])) - base
                record(up, r, max(0.0, r))
            if structured and m1 + m2:
                _, _, M = identify_quadratic(f, m1 + m2)
                convex[low] &= _pd(M[:m1, :m1])
                convex[up] &= _pd(-M[m1:, m1:])
            else:
                convex[low] = convex[up] = False
    results = {}
    for key in "abcdef":
        label = "sampled+convexity" if key in "bcef" and convex[key] else "sampled"
        results[key] = InequalityResult(key, worst[key], worst[key] <= tol, label, count[key])
    return EquivalenceReport(results)


# --- saddle sweep -------------------------------------------------------------

@dataclass
class SweepResult:
    eps_u: np.ndarray
    eps_w: np.ndarray
    cost: np.ndarray
    status: list

    def center(self) -> tuple[int, int]:
        i = int(np.argmin(np.abs(self.eps_u - 1.0)))
        j = int(np.argmin(np.abs(self.eps_w - 1.0)))
        return i, j

    def saddle_violation(self) -> float:
        """Worst relative violation of ``J(1, e_w) <= J(1, 1) <= J(e_u, 1)``."""
        i, j = self.center()
        c = self.cost[i, j]
        scale = max(abs(c), 1e-12)
        row = self.cost[i, :]
        col = self.cost[:, j]
        v1 = np.nanmax(row - c) / scale
        v2 = np.nanmax(c - col) / scale
        return float(max(v1, v2, 0.0))

    def holds(self, rel: float = 1e-6) -> bool:
        i, j = self.center()
        ok = np.all(np.isfinite(self.cost[i, :])) and np.all(np.isfinite(self.cost[:, j]))
        return bool(ok and self.saddle_violation() <= rel)

    def rows(self):
        for i, eu in enumerate(self.eps_u):
            for j, ew in enumerate(self.eps_w):
                yield float(eu), float(ew), float(self.cost[i, j]), self.status[i][j]


def saddle_sweep(sys: GameSystem, costs: StageCosts, law: FeedbackLaw, x0, eps_u, eps_w,
                 cfg: SimConfig | None = None) -> SweepResult:
    """Cost of ``(eps_u * kappa_1, eps_w * kappa_2)`` over a grid of scalings.

    A cell whose simulation fails is recorded as NaN with the error name.
    Branch enumeration is replaced by flow priority so every cell has one
    deterministic solution.
    """
    cfg = cfg or SimConfig()
    if cfg.policy is Policy.BOTH:
        cfg = replace(cfg, policy=Policy.FLOW)
    eps_u = np.asarray(eps_u, dtype=float)
    eps_w = np.asarray(eps_w, dtype=float)
    cost = np.full((len(eps_u), len(eps_w)), np.nan)
    status = [["" for _ in eps_w] for _ in eps_u]
    for i, eu in enumerate(eps_u):
        for j, ew in enumerate(eps_w):
            try:
                pair = simulate(sys, x0, cfg, law=law.scaled(eu, ew))[0]
                rep = evaluate_cost(pair, costs)
                cost[i, j] = rep.total_with_tail
                status[i][j] = pair.status.value
            except HygameError as exc:
                status[i][j] = f"invalid:{type(exc).__name__}"
    return SweepResult(eps_u, eps_w, cost, status)
