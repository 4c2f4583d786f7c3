"""Hybrid game Riccati equations and the saddle-point gains they induce."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .errors import (
    BlowUp,
    DefinitenessViolated,
    FlowConditionViolated,
    InconsistentEquations,
    MissingTimer,
    NoConvergence,
    SingularRv,
)
from .system import FeedbackLaw, QuadraticGameSpec

BLOWUP = 1e9
PSD_TOL = 1e-10
RV_COND_MAX = 1e12
GRID_STEPS = 2000


class Kind(enum.Enum):
    PERIODIC_TIMER = "periodic_timer"
    CONSTANT_P = "constant_p"
    SECURITY_JUMP = "security_jump"
    CARE_ONLY = "care_only"
    DARE_ONLY = "dare_only"


def _sym(M):
    return 0.5 * (M + M.T)


def _S(spec: QuadraticGameSpec) -> np.ndarray:
    """``B_C1 R_C1^-1 B_C1' + B_C2 R_C2^-1 B_C2'``."""
    S = np.zeros((spec.n, spec.n))
    for B, R in ((spec.B_C1, spec.R_C1), (spec.B_C2, spec.R_C2)):
        if B.shape[1]:
            S += B @ np.linalg.solve(R, B.T)
    return S


def flow_residual(spec: QuadraticGameSpec, P: np.ndarray) -> np.ndarray:
    """``-P S P + Q_C + P A_C + A_C' P``; zero at a constant solution."""
    A = spec.A_C
    return -P @ _S(spec) @ P + spec.Q_C + P @ A + A.T @ P


def riccati_rhs(spec: QuadraticGameSpec):
    """``-dP/dtau`` as a function of ``P``."""
    A, Q, S = spec.A_C, spec.Q_C, _S(spec)
    return lambda P: -P @ S @ P + Q + P @ A + A.T @ P


def integrate_riccati_ode(spec: QuadraticGameSpec, P_T, T_bar: float, steps: int = GRID_STEPS):
    """Backward RK4 from ``P(T_bar) = P_T`` down to ``tau = 0``.

    Returns ``(tau, P, dP)`` on a uniform grid in increasing ``tau``; ``dP`` is
    ``dP/dtau`` from the right-hand side at each node.
    """
    P = _sym(np.atleast_2d(np.asarray(P_T, dtype=float)))
    n = P.shape[0]
    f = riccati_rhs(spec)
    tau = np.linspace(0.0, T_bar, steps + 1)
    out = np.empty((steps + 1, n, n))
    out[-1] = P
    h = T_bar / steps if steps else 0.0
    # sigma = T_bar - tau runs forward with dP/dsigma = f(P).
    for k in range(steps, 0, -1):
        k1 = f(P)
        k2 = f(P + 0.5 * h * k1)
        k3 = f(P + 0.5 * h * k2)
        k4 = f(P + h * k3)
        P = _sym(P + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4))
        if not np.all(np.isfinite(P)) or np.abs(P).max() > BLOWUP:
            raise BlowUp(f"Riccati ODE escapes at tau={tau[k - 1]:.6g}")
        out[k - 1] = P
    dP = np.array([-f(Pk) for Pk in out])
    return tau, out, dP


def _Rv(spec: QuadraticGameSpec, P: np.ndarray) -> np.ndarray:
    B = spec.B_D
    return spec.R_D + B.T @ P @ B


def jump_conditions(spec: QuadraticGameSpec, P: np.ndarray) -> dict:
    """Definiteness of the jump blocks and conditioning of ``R_v``."""
    B1, B2 = spec.B_D1, spec.B_D2
    m1, m2 = B1.shape[1], B2.shape[1]
    out = {"min_eig_D1": None, "min_eig_negD2": None, "Rv_cond": None}
    if m1:
        out["min_eig_D1"] = float(np.linalg.eigvalsh(spec.R_D1 + B1.T @ P @ B1).min())
    if m2:
        out["min_eig_negD2"] = float(np.linalg.eigvalsh(-spec.R_D2 - B2.T @ P @ B2).min())
    if m1 + m2:
        out["Rv_cond"] = float(np.linalg.cond(_Rv(spec, P)))
    return out


def _check_jump_blocks(spec, P):
    c = jump_conditions(spec, P)
    for key in ("min_eig_D1", "min_eig_negD2"):
        if c[key] is not None and c[key] < -PSD_TOL:
            raise DefinitenessViolated(f"{key} = {c[key]:.3e} < 0")
    if c["Rv_cond"] is not None and not c["Rv_cond"] < RV_COND_MAX:
        raise SingularRv(f"R_v is singular (cond = {c['Rv_cond']:.3e})")
    return c


def jump_update(spec: QuadraticGameSpec, P0, check: bool = True) -> np.ndarray:
    """``Q_D + A_D' P0 A_D - A_D' P0 B_D R_v^-1 B_D' P0 A_D``."""
    P0 = _sym(np.atleast_2d(np.asarray(P0, dtype=float)))
    A, B = spec.A_D, spec.B_D
    out = spec.Q_D + A.T @ P0 @ A
    if B.shape[1]:
        if check:
            _check_jump_blocks(spec, P0)
        Rv = _Rv(spec, P0)
        W = B.T @ P0 @ A
        out = out - W.T @ np.linalg.solve(Rv, W)
    return _sym(out)


def jump_gain(spec: QuadraticGameSpec, P0) -> tuple[np.ndarray, np.ndarray]:
    """Row blocks ``(K_D1, K_D2)`` of ``-R_v^-1 [B_D1' P0 A_D; B_D2' P0 A_D]``."""
    m1 = spec.B_D1.shape[1]
    B = spec.B_D
    if B.shape[1] == 0:
        return np.zeros((0, spec.n)), np.zeros((0, spec.n))
    K = -np.linalg.solve(_Rv(spec, P0), B.T @ P0 @ spec.A_D)
    return K[:m1], K[m1:]


def flow_gain(spec: QuadraticGameSpec, P) -> tuple[np.ndarray, np.ndarray]:
    """``(-R_C1^-1 B_C1' P, -R_C2^-1 B_C2' P)``."""
    out = []
    for B, R in ((spec.B_C1, spec.R_C1), (spec.B_C2, spec.R_C2)):
        out.append(-np.linalg.solve(R, B.T @ P) if B.shape[1] else np.zeros((0, spec.n)))
    return out[0], out[1]


@dataclass
class RiccatiSolution:
    kind: Kind
    P0: np.ndarray
    law: FeedbackLaw
    conditions: dict = field(default_factory=dict)
    tau: Optional[np.ndarray] = None
    P_grid: Optional[np.ndarray] = None
    dP_grid: Optional[np.ndarray] = None
    iterations: int = 0
    residual: float = 0.0

    def __post_init__(self):
        self._spline = None
        if self.tau is not None:
            self._spline = CubicHermiteSpline(self.tau, self.P_grid, self.dP_grid, axis=0)

    @property
    def P(self) -> np.ndarray:
        return self.P0

    def P_at(self, tau: float) -> np.ndarray:
        if self._spline is None:
            return self.P0
        return _sym(self._spline(float(tau)))

    def dP_at(self, tau: float) -> np.ndarray:
        if self._spline is None:
            return np.zeros_like(self.P0)
        return _sym(self._spline(float(tau), 1))

    def gains_at(self, tau: float = 0.0) -> dict:
        spec = self.conditions.get("_spec")
        KC1, KC2 = flow_gain(spec, self.P_at(tau))
        P_post = self.P_at(0.0) if self.tau is not None else self.P0
        KD1, KD2 = jump_gain(spec, P_post)
        return {"KC1": KC1, "KC2": KC2, "KD1": KD1, "KD2": KD2}

    def to_json(self) -> dict:
        g = self.gains_at(0.0)
        out = {
            "kind": self.kind.value,
            "P0": self.P0.tolist(),
            "gains": {k: v.tolist() for k, v in g.items()},
            "conditions": {k: v for k, v in self.conditions.items() if not k.startswith("_")},
            "iterations": self.iterations,
            "residual": self.residual,
        }
        if self.tau is not None:
            out["P_grid"] = {"tau": self.tau.tolist(), "P": self.P_grid.tolist()}
            out["P_Tbar"] = self.P_grid[-1].tolist()
        return out


def _timer_law(spec: QuadraticGameSpec, sol: RiccatiSolution) -> FeedbackLaw:
    n = spec.n
    B1, B2, R1, R2 = spec.B_C1, spec.B_C2, spec.R_C1, spec.R_C2
    KD1, KD2 = jump_gain(spec, sol.P_at(0.0))

    def c1(x):
        return -np.linalg.solve(R1, B1.T @ sol.P_at(x[n]) @ x[:n])

    def c2(x):
        return -np.linalg.solve(R2, B2.T @ sol.P_at(x[n]) @ x[:n])

    return FeedbackLaw(
        spec.dims,
        c1 if B1.shape[1] else None,
        c2 if B2.shape[1] else None,
        (lambda x: KD1 @ x[:n]) if KD1.shape[0] else None,
        (lambda x: KD2 @ x[:n]) if KD2.shape[0] else None,
    )


def _constant_law(spec: QuadraticGameSpec, P: np.ndarray) -> FeedbackLaw:
    KC1, KC2 = flow_gain(spec, P)
    KD1, KD2 = jump_gain(spec, P) if spec.has_jumps else (np.zeros((spec.dims.mD1, spec.n)), np.zeros((spec.dims.mD2, spec.n)))
    pick = lambda K: K if K.shape[0] else None
    return FeedbackLaw.linear(pick(KC1), pick(KC2), pick(KD1), pick(KD2), n=spec.n)


def _dare_iteration(spec: QuadraticGameSpec, P=None, iters: int = 20000, tol: float = 1e-13) -> np.ndarray:
    P = np.array(spec.Q_D if P is None else P, dtype=float)
    for _ in range(iters):
        Pn = jump_update(spec, P)
        if not np.all(np.isfinite(Pn)) or np.abs(Pn).max() > BLOWUP:
            raise NoConvergence("jump Riccati iteration diverges")
        if np.linalg.norm(Pn - P) <= tol * max(1.0, np.linalg.norm(P)):
            return Pn
        P = Pn
    raise NoConvergence("jump Riccati iteration did not settle")


def solve_periodic(spec: QuadraticGameSpec, alpha: float = 0.5, tol: float = 1e-8,
                   max_iter: int = 500, steps: int = GRID_STEPS, coarse_steps: int = 200) -> RiccatiSolution:
    """Periodic (``T1 = T2``) or two-threshold timer Riccati solution.

    Iterates ``P0 <- (1 - alpha) P0 + alpha Phi(P0)`` where ``Phi`` integrates
    the Riccati ODE back over ``[0, T2]`` from ``jump_update(P0)``. A coarse
    grid provides the warm start for the final grid.
    """
    if not spec.has_timer:
        raise MissingTimer("periodic solver needs timer thresholds")
    T = spec.T2
    try:
        P = _dare_iteration(spec, iters=200)
    except (NoConvergence, DefinitenessViolated, SingularRv):
        P = spec.Q_D.copy()
    total = 0
    for grid, tol_k in ((coarse_steps, max(tol, 1e-10)), (steps, tol)):
        if grid <= 0:
            continue
        for it in range(max_iter):
            _check_jump_blocks(spec, P) if spec.B_D.shape[1] else None
            _, Ps, _ = integrate_riccati_ode(spec, jump_update(spec, P), T, grid)
            phi = Ps[0]
            gap = float(np.linalg.norm(phi - P))
            total += 1
            if gap < tol_k:
                P = phi
                break
            P = (1.0 - alpha) * P + alpha * phi
        else:
            raise NoConvergence(f"periodic Riccati iteration stalled at gap {gap:.3e}")
    tau, Ps, dPs = integrate_riccati_ode(spec, jump_update(spec, P), T, steps)
    P0 = Ps[0]
    cond = _check_jump_blocks(spec, P0) if spec.B_D.shape[1] else {}
    cond = dict(cond)
    cond["fixed_point_gap"] = float(np.linalg.norm(P0 - P))
    cond["min_eig_P"] = float(min(np.linalg.eigvalsh(Pk).min() for Pk in Ps))
    if cond["min_eig_P"] < -PSD_TOL:
        raise DefinitenessViolated("P(tau) is not positive semidefinite")
    if spec.T1 < spec.T2:
        k1 = int(round(spec.T1 / T * steps))
        mism = float(np.linalg.norm(Ps[k1] - Ps[-1]))
        cond["threshold_mismatch"] = mism
        if mism > 1e-6:
            raise InconsistentEquations(
                f"jump equation cannot hold at both thresholds (mismatch {mism:.3e})"
            )
    cond["_spec"] = spec
    sol = RiccatiSolution(Kind.PERIODIC_TIMER, P0, None, cond, tau, Ps, dPs, total, cond["fixed_point_gap"])
    sol.law = _timer_law(spec, sol)
    return sol


# --- constant-P solutions ----------------------------------------------------

def _sym_basis(n):
    basis = []
    for i in range(n):
        for j in range(i, n):
            E = np.zeros((n, n))
            E[i, j] = E[j, i] = 1.0
            basis.append(E)
    return basis


def _vec_upper(M):
    iu = np.triu_indices(M.shape[0])
    return M[iu]


def _jump_residual(spec, P):
    return jump_update(spec, P, check=False) - P


def _d_jump_residual(spec, P, E):
    A, B = spec.A_D, spec.B_D
    dJ = A.T @ E @ A
    if B.shape[1]:
        Rv = _Rv(spec, P)
        W = B.T @ P @ A
        dW = B.T @ E @ A
        Z = np.linalg.solve(Rv, W)
        dJ = dJ - dW.T @ Z - Z.T @ dW + Z.T @ (B.T @ E @ B) @ Z
    return dJ - E


def _d_flow_residual(spec, P, E, S):
    A = spec.A_C
    return -E @ S @ P - P @ S @ E + E @ A + A.T @ E


def _stacked(spec, P, S):
    parts = []
    if spec.has_flow:
        parts.append(_vec_upper(-P @ S @ P + spec.Q_C + P @ spec.A_C + spec.A_C.T @ P))
    if spec.has_jumps:
        parts.append(_vec_upper(_jump_residual(spec, P)))
    return np.concatenate(parts) if parts else np.zeros(0)


def _newton(spec: QuadraticGameSpec, P: np.ndarray, max_iter: int = 100, tol: float = 1e-13):
    n = spec.n
    S = _S(spec)
    basis = _sym_basis(n)
    best = np.inf
    stall = 0
    for it in range(max_iter):
        r = _stacked(spec, P, S)
        nr = float(np.linalg.norm(r))
        scale = max(1.0, float(np.linalg.norm(P)))
        if nr <= tol * scale:
            return P, nr, it
        cols = []
        for E in basis:
            parts = []
            if spec.has_flow:
                parts.append(_vec_upper(_d_flow_residual(spec, P, E, S)))
            if spec.has_jumps:
                parts.append(_vec_upper(_d_jump_residual(spec, P, E)))
            cols.append(np.concatenate(parts))
        Jm = np.column_stack(cols)
        step, *_ = np.linalg.lstsq(Jm, -r, rcond=None)
        dP = sum(s * E for s, E in zip(step, basis))
        P = _sym(P + dP)
        if not np.all(np.isfinite(P)) or np.abs(P).max() > BLOWUP:
            raise NoConvergence("Newton iterates diverge")
        if nr < best * (1 - 1e-3):
            best = nr
            stall = 0
        else:
            stall += 1
        if float(np.linalg.norm(dP)) <= 1e-15 * scale or stall >= 8:
            break
    r = float(np.linalg.norm(_stacked(spec, P, S)))
    return P, r, max_iter


def _care_warm_start(spec: QuadraticGameSpec, horizon: float = 200.0, dt: float = 0.01) -> np.ndarray:
    f = riccati_rhs(spec)
    P = np.zeros((spec.n, spec.n))
    for _ in range(int(horizon / dt)):
        k1 = f(P)
        k2 = f(P + 0.5 * dt * k1)
        k3 = f(P + 0.5 * dt * k2)
        k4 = f(P + dt * k3)
        P = _sym(P + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4))
        if not np.all(np.isfinite(P)) or np.abs(P).max() > BLOWUP:
            raise BlowUp("flow Riccati warm start escapes")
        if np.abs(k1).max() < 1e-12:
            break
    return P


def solve_constant_robust(spec: QuadraticGameSpec, P_init=None, tol: float = 1e-6) -> RiccatiSolution:
    """Constant ``P`` solving the flow and jump algebraic equations together.

    Flow-only specs (``has_jumps=False``) reduce to a game CARE, jump-only specs
    (``has_flow=False``) to a game DARE.
    """
    if not spec.has_flow and not spec.has_jumps:
        P = np.zeros((spec.n, spec.n))
        return RiccatiSolution(Kind.CONSTANT_P, P, _constant_law(spec, P), {"_spec": spec})
    if P_init is not None:
        P = _sym(np.atleast_2d(np.asarray(P_init, dtype=float)))
    elif spec.has_flow:
        try:
            P = _care_warm_start(spec)
        except BlowUp:
            P = np.eye(spec.n)
    else:
        try:
            P = _dare_iteration(spec, iters=500, tol=1e-10)
        except (NoConvergence, DefinitenessViolated, SingularRv):
            P = spec.Q_D.copy()
    P, res, its = _newton(spec, P)
    if not np.all(np.isfinite(P)):
        raise NoConvergence("Newton iteration failed")
    if res > tol * max(1.0, float(np.linalg.norm(P))):
        raise InconsistentEquations(f"stacked residual stagnates at {res:.3e}")
    cond = {"residual": res}
    if spec.has_jumps and spec.B_D.shape[1]:
        cond.update(_check_jump_blocks(spec, P))
    cond["min_eig_P"] = float(np.linalg.eigvalsh(P).min())
    cond["_spec"] = spec
    kind = Kind.CONSTANT_P
    if not spec.has_jumps:
        kind = Kind.CARE_ONLY
    elif not spec.has_flow:
        kind = Kind.DARE_ONLY
    return RiccatiSolution(kind, P, _constant_law(spec, P), cond, iterations=its, residual=res)


def solve_security(spec: QuadraticGameSpec, flow_map: Callable[[np.ndarray], np.ndarray],
                   box, n_check: int = 10_000, tol: float = 1e-8, seed: int = 0,
                   P_init=None) -> RiccatiSolution:
    """Jump-actuated game: jump Riccati equation plus ``2 x'P F(x) = 0`` on flows.

    The flow condition is checked at ``n_check`` uniform samples of ``box``
    (a sequence of ``(lo, hi)`` per state coordinate).
    """
    jump_only = QuadraticGameSpec(**{**spec.__dict__, "has_flow": False, "has_jumps": True})
    sol = solve_constant_robust(jump_only, P_init=P_init)
    P = sol.P0
    box = np.asarray(box, dtype=float)
    rng = np.random.default_rng(seed)
    xs = rng.uniform(box[:, 0], box[:, 1], size=(n_check, spec.n))
    res = np.array([2.0 * x @ P @ np.asarray(flow_map(x), dtype=float) for x in xs])
    worst = float(np.abs(res).max()) if len(res) else 0.0
    scale = max(1.0, float(np.linalg.norm(P)) * float(np.max(np.abs(box))) ** 2)
    cond = dict(sol.conditions)
    cond["flow_condition_max"] = worst
    if worst > tol * scale:
        raise FlowConditionViolated(f"max |2x'PF(x)| = {worst:.3e} on the sampled box")
    return RiccatiSolution(Kind.SECURITY_JUMP, P, sol.law, cond, iterations=sol.iterations, residual=sol.residual)
