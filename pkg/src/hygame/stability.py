"""Sampled Lyapunov checks for closed-loop saddle laws."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .certificate import ValueCertificate
from .domain import SolutionPair, TerminalStatus
from .errors import CertificateMissing, HygameError


@dataclass(frozen=True)
class TargetSet:
    kind: str
    distance: Callable[[np.ndarray], float]

    def __call__(self, x) -> float:
        return float(self.distance(np.asarray(x, dtype=float)))

    @classmethod
    def origin(cls, n: int, coords: Sequence[int] | None = None) -> "TargetSet":
        """Distance to the origin, optionally over a subset of coordinates."""
        idx = list(range(n)) if coords is None else list(coords)
        return cls("origin", lambda x: float(np.linalg.norm(np.asarray(x)[idx])))

    @classmethod
    def box(cls, lo, hi) -> "TargetSet":
        lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        return cls("box", lambda x: float(np.linalg.norm(np.maximum(lo - x, 0) + np.maximum(x - hi, 0))))

    @classmethod
    def custom(cls, fn) -> "TargetSet":
        return cls("custom", fn)


@dataclass
class PDReport:
    passed: bool
    min_off_set: float
    max_on_set: float
    witnesses: list = field(default_factory=list)

    def to_dict(self):
        return {"passed": self.passed, "min_off_set": self.min_off_set, "max_on_set": self.max_on_set,
                "witnesses": [list(map(float, w)) for w in self.witnesses[:5]]}


def check_pd(cost_fn, law_component, A: TargetSet, points, on_tol: float = 1e-12,
             set_tol: float = 1e-12) -> PDReport:
    """``rho(x, kappa(x)) > 0`` off ``A`` and ``= 0`` on ``A`` at sampled points."""
    min_off, max_on, bad = np.inf, 0.0, []
    for x in np.asarray(points, dtype=float):
        val = float(cost_fn(x, law_component(x)))
        if A(x) <= set_tol:
            max_on = max(max_on, abs(val))
            if abs(val) > on_tol:
                bad.append(x)
        else:
            min_off = min(min_off, val)
            if not val > 0.0:
                bad.append(x)
    return PDReport(not bad, float(min_off), float(max_on), bad)


@dataclass
class LyapunovReport:
    flow_worst: float
    jump_worst: float
    passed: bool
    shells: np.ndarray
    alpha1: np.ndarray
    alpha2: np.ndarray
    envelope_label: str = "sampled envelopes"
    analytic_bracket: Optional[bool] = None

    def to_dict(self):
        return {
            "flow_worst": self.flow_worst,
            "jump_worst": self.jump_worst,
            "passed": self.passed,
            "envelope": self.envelope_label,
            "shells": self.shells.tolist(),
            "alpha1": self.alpha1.tolist(),
            "alpha2": self.alpha2.tolist(),
            "analytic_bracket": self.analytic_bracket,
        }


def fit_envelopes(V: ValueCertificate, A: TargetSet, points, shells: int = 20):
    """Monotone lower/upper envelopes of ``V`` against the distance to ``A``.

    ``alpha1(s)`` is the least ``V`` among points at distance at least ``s``,
    ``alpha2(s)`` the largest ``V`` among points at distance at most ``s``.
    """
    pts = np.asarray(points, dtype=float)
    d = np.array([A(x) for x in pts])
    v = np.array([V(x) for x in pts])
    s = np.linspace(0.0, d.max() if len(d) else 0.0, shells)
    a1 = np.array([v[d >= si].min() if np.any(d >= si) else np.nan for si in s])
    a2 = np.array([v[d <= si].max() if np.any(d <= si) else np.nan for si in s])
    return s, a1, a2


def _split(sys, law):
    if law is None:
        if sys.law is None:
            raise ValueError("a feedback law or a closed-loop system is required")
        return sys.open_loop, sys.law
    return sys, law


def check_lyapunov_decrease(V: ValueCertificate | None, sys, A: TargetSet, points, costs,
                            law=None, tol: float = 1e-6, alpha1=None, alpha2=None) -> LyapunovReport:
    """Flow and jump decrease of ``V`` bounded by the stage costs under the law.

    ``sys`` is a closed-loop system or an open one with ``law`` given.
    """
    if V is None:
        raise CertificateMissing("no value certificate supplied")
    base, law = _split(sys, law)
    pts = np.asarray(points, dtype=float)
    fw, jw = -np.inf, -np.inf
    D = base.jump_set
    jpts = []
    for x in pts:
        if base.flow_set.contains(x):
            u = law.flow(x)
            r = float(V.grad(x) @ base.F(x, u)) + costs.L_C(x, u)
            fw = max(fw, r)
        y = D.project(x) if D.data.get("project") is not None else x
        if not D.is_empty and D.contains(y):
            jpts.append(y)
    for x in jpts:
        u = law.jump(x)
        r = V(base.G(x, u)) - V(x) + costs.L_D(x, u)
        jw = max(jw, r)
    fw = 0.0 if fw == -np.inf else fw
    jw = 0.0 if jw == -np.inf else jw
    s, a1, a2 = fit_envelopes(V, A, pts)
    bracket = None
    if alpha1 is not None and alpha2 is not None:
        vals = [(alpha1(A(x)), V(x), alpha2(A(x))) for x in pts]
        bracket = all(lo <= v + 1e-12 and v <= hi + 1e-12 for lo, v, hi in vals)
    passed = fw <= tol and jw <= tol and bracket is not False
    return LyapunovReport(fw, jw, passed, s, a1, a2, analytic_bracket=bracket)


def _inverse(fn, y, hi=1e6):
    """Least ``s >= 0`` with ``fn(s) >= y`` for nondecreasing ``fn`` (bisection)."""
    lo = 0.0
    if fn(hi) < y:
        return np.inf
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if fn(mid) >= y:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass
class TrajectoryReport:
    x0: np.ndarray
    passed: bool
    max_distance: float
    bound: float
    final_distance: float
    exp_rate: Optional[float]
    geometric_ratio: Optional[float]
    status: str
    caveat: str = ""

    def to_dict(self):
        return {
            "x0": self.x0.tolist(), "passed": self.passed, "max_distance": self.max_distance,
            "bound": self.bound, "final_distance": self.final_distance, "exp_rate": self.exp_rate,
            "geometric_ratio": self.geometric_ratio, "status": self.status, "caveat": self.caveat,
        }


def trajectory_rates(pair: SolutionPair, A: TargetSet):
    """Exponential decay rate fitted on the last flow interval and median post-jump ratio."""
    ts = np.asarray(pair.arc.times[-1], dtype=float)
    ds = np.array([A(x) for x in pair.arc.states[-1]])
    exp_rate = None
    mask = ds > 1e-12
    if mask.sum() >= 3 and np.ptp(ts[mask]) > 0:
        slope = np.polyfit(ts[mask], np.log(ds[mask]), 1)[0]
        exp_rate = float(-slope)
    ratio = None
    post = [A(pair.arc.states[k][0]) for k in range(1, pair.arc.J + 1)]
    post = [p for p in post if p > 1e-12]
    if len(post) >= 2:
        ratio = float(np.median(np.array(post[1:]) / np.array(post[:-1])))
    return exp_rate, ratio


def check_trajectory_convergence(sys_closed, A: TargetSet, x0_batch, cfg, alpha1=None, alpha2=None,
                                 final_tol: float = 1e-3, rel_tol: float = 1e-6) -> list[TrajectoryReport]:
    """Simulate each initial state and judge boundedness and convergence."""
    from .simulator import simulate

    out = []
    for x0 in np.atleast_2d(np.asarray(x0_batch, dtype=float)):
        try:
            pair = simulate(sys_closed, x0, cfg)[0]
        except HygameError as exc:
            out.append(TrajectoryReport(x0, False, np.nan, np.nan, np.nan, None, None, f"error:{type(exc).__name__}"))
            continue
        ds = np.array([A(x) for _, _, x in pair.arc.samples()])
        d0 = A(x0)
        bound = np.inf
        if alpha1 is not None and alpha2 is not None:
            bound = _inverse(alpha1, alpha2(d0)) * (1.0 + rel_tol)
        exp_rate, ratio = trajectory_rates(pair, A)
        final = float(ds[-1])
        bounded = bool(ds.max() <= bound)
        converging = final < final_tol or (
            (exp_rate is not None and exp_rate > 0) or (ratio is not None and ratio < 1)
        )
        caveat = "zeno-truncated; convergence judged on the stored horizon" if pair.status is TerminalStatus.ZENO_TRUNCATED else ""
        out.append(TrajectoryReport(x0, bounded and converging, float(ds.max()), float(bound), final,
                                    exp_rate, ratio, pair.status.value, caveat))
    return out


def persistence_slope(pair: SolutionPair, kind: str = "jumping", burn_in: float = 0.2) -> float:
    """Slope of ``j`` (or ``t``) against ``t + j`` after discarding a burn-in fraction."""
    pts = [(t, j) for t, j, _ in pair.arc.samples()]
    arr = np.array(pts, dtype=float)
    s = arr[:, 0] + arr[:, 1]
    keep = s >= s[-1] * burn_in
    y = arr[keep, 1] if kind == "jumping" else arr[keep, 0]
    if keep.sum() < 2 or np.ptp(s[keep]) == 0:
        return 0.0
    return float(np.polyfit(s[keep], y, 1)[0])


def check_average_dwell(pair: SolutionPair, lam_C: float, lam_D: float, gamma: float, M: float) -> bool:
    """``lam_C t + lam_D j <= M - gamma (t + j)`` at every stored sample."""
    return all(lam_C * t + lam_D * j <= M - gamma * (t + j) + 1e-12 for t, j, _ in pair.arc.samples())


@dataclass
class StabilityReport:
    condition_used: str
    pd_flow: PDReport
    pd_jump: PDReport
    decrease: LyapunovReport
    trajectories: list
    persistence: Optional[float] = None

    @property
    def passed(self) -> bool:
        traj_ok = all(t.passed for t in self.trajectories)
        return self.decrease.passed and traj_ok and self.condition_used != "none"

    def to_dict(self):
        return {
            "condition_used": self.condition_used,
            "pd_flow": self.pd_flow.to_dict(),
            "pd_jump": self.pd_jump.to_dict(),
            "decrease": self.decrease.to_dict(),
            "trajectories": [t.to_dict() for t in self.trajectories],
            "persistence_slope": self.persistence,
            "passed": self.passed,
        }


def check_stability(V, sys_closed, costs, A: TargetSet, points, x0_batch, cfg, alpha1=None, alpha2=None,
                    tol: float = 1e-6) -> StabilityReport:
    """Combine PD, decrease and trajectory checks and name the applicable case.

    Cases: "1" both stage costs positive definite under the law; "4" only the
    jump cost (needs persistent jumping); "5" only the flow cost (needs
    persistent flowing). Persistence is judged on the simulated trajectories.
    """
    base, law = sys_closed.open_loop, sys_closed.law
    pts = np.asarray(points, dtype=float)
    cpts = [x for x in pts if base.flow_set.contains(x)]
    D = base.jump_set
    dpts = []
    for x in pts:
        y = D.project(x) if D.data.get("project") is not None else x
        if not D.is_empty and D.contains(y):
            dpts.append(y)
    pd_c = check_pd(costs.L_C, law.flow, A, cpts)
    pd_d = check_pd(costs.L_D, law.jump, A, dpts)
    dec = check_lyapunov_decrease(V, sys_closed, A, pts, costs, tol=tol, alpha1=alpha1, alpha2=alpha2)
    trajs = check_trajectory_convergence(sys_closed, A, x0_batch, cfg, alpha1, alpha2)
    persistence = None
    if pd_c.passed and pd_d.passed:
        cond = "1"
    elif pd_d.passed or pd_c.passed:
        from .simulator import simulate

        kind = "jumping" if pd_d.passed else "flowing"
        slopes = [persistence_slope(simulate(sys_closed, x0, cfg)[0], kind)
                  for x0 in np.atleast_2d(np.asarray(x0_batch, dtype=float))]
        persistence = float(min(slopes))
        cond = ("4" if kind == "jumping" else "5") if persistence > 0 else "none"
    else:
        cond = "none"
    return StabilityReport(cond, pd_c, pd_d, dec, trajs, persistence)
