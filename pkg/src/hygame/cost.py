"""Hybrid cost functional and certificate-based cost bounds."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import simpson

from .certificate import ValueCertificate
from .domain import SolutionPair, TerminalStatus, truncate, HybridTime
from .errors import CertificateViolated, EmptyDomain


@dataclass(frozen=True)
class StageCosts:
    """``L_C(x, u_C)``, ``L_D(x, u_D)`` and terminal cost ``q(x)``.

    ``input_quadratic`` declares both stage costs to be polynomials of degree
    at most two in the input, which the min-max routines exploit.
    """

    L_C: Callable[[np.ndarray, np.ndarray], float]
    L_D: Callable[[np.ndarray, np.ndarray], float]
    q: Callable[[np.ndarray], float]
    input_quadratic: bool = True

    @classmethod
    def quadratic(cls, Q_C, R_C, Q_D, R_D, P_q=None, state_slice=None, q=None) -> "StageCosts":
        """``x'Qx + u'Ru`` costs on ``x[state_slice]`` (all of ``x`` by default)."""
        Q_C, R_C, Q_D, R_D = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (Q_C, R_C, Q_D, R_D))
        sel = slice(None) if state_slice is None else state_slice

        def L_C(x, u):
            xs = np.asarray(x)[sel]
            return float(xs @ Q_C @ xs + (u @ R_C @ u if R_C.size else 0.0))

        def L_D(x, u):
            xs = np.asarray(x)[sel]
            return float(xs @ Q_D @ xs + (u @ R_D @ u if R_D.size else 0.0))

        if q is None:
            Pq = np.zeros_like(Q_C) if P_q is None else np.atleast_2d(np.asarray(P_q, dtype=float))
            q = lambda x: float(np.asarray(x)[sel] @ Pq @ np.asarray(x)[sel])
        return cls(L_C, L_D, q, True)


class Sense(enum.Enum):
    UPPER = "upper"
    LOWER = "lower"
    EXACT = "exact"


@dataclass
class CostReport:
    flow_cost: float
    jump_cost: float
    terminal_cost: float
    total: float
    tail_bound: Optional[float] = None
    per_interval: list = field(default_factory=list)
    jump_costs: list = field(default_factory=list)
    terminal_converged: bool = True
    negative_stage_cost: bool = False

    @property
    def total_with_tail(self) -> float:
        return self.total + (self.tail_bound or 0.0)

    def to_dict(self) -> dict:
        return {
            "flow_cost": self.flow_cost,
            "jump_cost": self.jump_cost,
            "terminal_cost": self.terminal_cost,
            "total": self.total,
            "tail_bound": self.tail_bound,
            "total_with_tail": self.total_with_tail,
            "terminal_converged": self.terminal_converged,
            "negative_stage_cost": self.negative_stage_cost,
        }


def _geometric_tail(costs: list[float], window: int = 10, spread: float = 0.05) -> Optional[float]:
    """Sum of the remaining terms if the last costs decay with a stable ratio.

    The ratio is the median over the window; near an accumulation point the
    event localization error makes individual ratios noisy, so the spread is
    judged relative to the median.
    """
    if len(costs) < window + 1:
        return None
    last = np.asarray(costs[-(window + 1):], dtype=float)
    if np.any(last <= 0.0):
        return None
    r = last[1:] / last[:-1]
    rho = float(np.median(r))
    if rho >= 1.0 or np.abs(r - rho).max() > spread * rho:
        return None
    return float(last[-1] * rho / (1.0 - rho))


def evaluate_cost(pair: SolutionPair, costs: StageCosts, tail: bool = True) -> CostReport:
    """Flow integrals by composite Simpson, jump sum, ``q`` at the last state."""
    if pair is None or pair.arc.J < 0:
        raise EmptyDomain("no solution to evaluate")
    flow_parts = []
    negative = False
    for ts, xs, us in zip(pair.arc.times, pair.arc.states, pair.input.flow_values):
        if len(ts) < 2:
            flow_parts.append(0.0)
            continue
        vals = np.array([costs.L_C(x, u) for x, u in zip(xs, us)])
        negative |= bool(np.any(vals < -1e-12))
        flow_parts.append(float(simpson(vals, x=ts)))
    jump_parts = []
    for _, _, pre, _, ud in pair.jumps():
        c = float(costs.L_D(pre, ud))
        negative |= c < -1e-12
        jump_parts.append(c)
    terminal = float(costs.q(pair.arc.final_state))
    flow_cost = float(sum(flow_parts))
    jump_cost = float(sum(jump_parts))
    tail_bound = None
    if tail and pair.status is TerminalStatus.ZENO_TRUNCATED:
        tail_bound = _geometric_tail(jump_parts)
    # Convergence of the terminal term over the last 10% of stored samples.
    qs = np.array([costs.q(x) for _, _, x in pair.arc.samples()])
    k = max(2, len(qs) // 10)
    converged = bool(np.ptp(qs[-k:]) < 1e-6) if len(qs) >= 2 else True
    return CostReport(
        flow_cost,
        jump_cost,
        terminal,
        flow_cost + jump_cost + terminal,
        tail_bound,
        flow_parts,
        jump_parts,
        converged,
        negative,
    )


@dataclass
class CertificateReport:
    kind: str
    sense: Sense
    residuals: np.ndarray
    worst: float
    passed: bool
    tol: float

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "sense": self.sense.value,
            "worst": self.worst,
            "passed": self.passed,
            "tol": self.tol,
            "count": int(self.residuals.size),
        }


def _judge(kind, r: np.ndarray, sense: Sense, tol: float) -> CertificateReport:
    if r.size == 0:
        return CertificateReport(kind, sense, r, 0.0, True, tol)
    if sense is Sense.UPPER:
        worst = float(r.max())
        ok = worst <= tol
    elif sense is Sense.LOWER:
        worst = float(r.min())
        ok = worst >= -tol
    else:
        worst = float(np.abs(r).max())
        ok = worst <= tol
    return CertificateReport(kind, sense, r, worst, ok, tol)


def _flow_field(pair: SolutionPair):
    sys = pair.system
    if sys is not None:
        return lambda x, u: sys.F(x, u)
    return None


def check_flow_certificate(pair: SolutionPair, costs: StageCosts, V: ValueCertificate,
                           sense: Sense = Sense.EXACT, tol: float = 1e-6) -> CertificateReport:
    """Residual ``L_C + <grad V, F>`` at every flow sample.

    Without a system attached to the pair, ``d/dt V`` is estimated by finite
    differences of ``V`` along the stored samples.
    """
    F = _flow_field(pair)
    res = []
    for ts, xs, us in zip(pair.arc.times, pair.arc.states, pair.input.flow_values):
        if len(ts) < 2:
            continue
        if F is not None:
            res.extend(costs.L_C(x, u) + float(V.grad(x) @ F(x, u)) for x, u in zip(xs, us))
        else:
            vs = np.array([V(x) for x in xs])
            dv = np.gradient(vs, ts, edge_order=2 if len(ts) > 2 else 1)
            res.extend(costs.L_C(x, u) + d for x, u, d in zip(xs, us, dv))
    return _judge("flow", np.asarray(res, dtype=float), sense, tol)


def check_jump_certificate(pair: SolutionPair, costs: StageCosts, V: ValueCertificate,
                           sense: Sense = Sense.EXACT, tol: float = 1e-6) -> CertificateReport:
    """Residual ``L_D + V(x+) - V(x)`` at every stored jump."""
    res = [costs.L_D(pre, ud) + V(post) - V(pre) for _, _, pre, post, ud in pair.jumps()]
    return _judge("jump", np.asarray(res, dtype=float), sense, tol)


def telescoped_bound(pair: SolutionPair, costs: StageCosts, V: ValueCertificate,
                     sense: Sense = Sense.EXACT, tol: float = 1e-6,
                     upto: HybridTime | None = None) -> float:
    """Running cost up to ``upto`` (default: the end) plus ``V`` at that point.

    Compare with ``V(x0)``: at most for UPPER, at least for LOWER, equal for
    EXACT.
    """
    for chk in (check_flow_certificate, check_jump_certificate):
        rep = chk(pair, costs, V, sense, tol)
        if not rep.passed:
            raise CertificateViolated(f"{rep.kind} certificate fails in {sense.value} sense (worst {rep.worst:.3e})")
    part = pair if upto is None else truncate(pair, upto)
    rep = evaluate_cost(part, costs, tail=False)
    return rep.flow_cost + rep.jump_cost + V(part.arc.final_state)
