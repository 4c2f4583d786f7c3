"""Game dynamics (C, F, D, G), feedback laws and the closed-loop system."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .domain import InputDims
from .errors import DefinitenessViolated, DimensionMismatch, MissingTimer

Vec = np.ndarray
ScalarFn = Callable[[Vec], float]

EQ_TOL = 1e-6
INEQ_TOL = 1e-9


@dataclass(frozen=True)
class Piece:
    """Intersection of equality constraints ``g(x) = 0`` and inequalities ``h(x) >= 0``."""

    eqs: tuple[ScalarFn, ...] = ()
    ineqs: tuple[ScalarFn, ...] = ()

    def contains(self, x, eq_tol=EQ_TOL, ineq_tol=INEQ_TOL) -> bool:
        return all(abs(g(x)) <= eq_tol for g in self.eqs) and all(h(x) >= -ineq_tol for h in self.ineqs)

    def margin(self, x) -> float:
        """Signed slack of the inequalities (``+inf`` when there are none)."""
        return min((h(x) for h in self.ineqs), default=np.inf)


@dataclass(frozen=True)
class Region:
    """A subset of state space, a finite union of :class:`Piece`.

    Sets are taken as ``Pi(S) x R^m``: membership does not depend on the input.
    ``kind`` and ``data`` describe structured sets; ``predicate`` supplies a
    generic membership test when no pieces are given.
    """

    pieces: tuple[Piece, ...] = ()
    kind: str = "custom"
    data: dict = field(default_factory=dict, compare=False)
    predicate: Optional[Callable[[Vec], bool]] = field(default=None, compare=False)
    eq_tol: float = EQ_TOL
    ineq_tol: float = INEQ_TOL

    def contains(self, x, u=None) -> bool:
        x = np.asarray(x, dtype=float)
        if self.predicate is not None:
            return bool(self.predicate(x))
        return any(p.contains(x, self.eq_tol, self.ineq_tol) for p in self.pieces)

    __contains__ = contains

    @property
    def is_empty(self) -> bool:
        return self.kind == "empty"

    @property
    def is_thin(self) -> bool:
        return self.predicate is None and self.pieces and all(p.eqs for p in self.pieces)

    def project(self, x) -> Vec:
        """Snap ``x`` onto a thin set when a projector is known, else return ``x``."""
        proj = self.data.get("project")
        return np.asarray(proj(x), dtype=float) if proj is not None else np.asarray(x, dtype=float)

    # --- constructors -----------------------------------------------------
    @classmethod
    def everything(cls) -> "Region":
        return cls((Piece(),), kind="all")

    @classmethod
    def empty(cls) -> "Region":
        return cls((), kind="empty")

    @classmethod
    def box(cls, lo: Sequence[float], hi: Sequence[float]) -> "Region":
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError("box needs lo <= hi of equal length")
        ineqs = []
        for i in range(len(lo)):
            if np.isfinite(lo[i]):
                ineqs.append(lambda x, i=i, v=lo[i]: x[i] - v)
            if np.isfinite(hi[i]):
                ineqs.append(lambda x, i=i, v=hi[i]: v - x[i])
        return cls((Piece((), tuple(ineqs)),), kind="box", data={"lo": lo, "hi": hi})

    @classmethod
    def point(cls, index: int, value: float) -> "Region":
        """``{x : x[index] = value}``."""
        def project(x, i=index, v=value):
            y = np.array(x, dtype=float)
            y[i] = v
            return y

        return cls(
            (Piece((lambda x, i=index, v=value: x[i] - v,)),),
            kind="hyperplane",
            data={"index": index, "value": value, "project": project},
        )

    @classmethod
    def hyperplane(cls, a, b: float, ineqs: Sequence[ScalarFn] = ()) -> "Region":
        """``{x : a.x = b}`` intersected with ``h(x) >= 0`` for each ``h`` in ``ineqs``."""
        a = np.asarray(a, dtype=float)
        nrm = float(a @ a)

        def project(x):
            x = np.asarray(x, dtype=float)
            return x - (a @ x - b) / nrm * a

        return cls(
            (Piece((lambda x: float(a @ x) - b,), tuple(ineqs)),),
            kind="hyperplane",
            data={"a": a, "b": b, "project": project},
        )

    @classmethod
    def timer_levels(cls, index: int, levels: Sequence[float]) -> "Region":
        """``{x : x[index] in levels}``."""
        levels = tuple(sorted(set(float(v) for v in levels)))

        def project(x):
            y = np.array(x, dtype=float)
            y[index] = min(levels, key=lambda v: abs(v - y[index]))
            return y

        pieces = tuple(Piece((lambda x, v=v: x[index] - v,)) for v in levels)
        return cls(pieces, kind="timer", data={"index": index, "levels": levels, "project": project})

    @classmethod
    def from_predicate(cls, fn: Callable[[Vec], bool]) -> "Region":
        return cls((), kind="custom", predicate=fn)


@dataclass(frozen=True)
class GameSystem:
    """Hybrid system with inputs split between a minimizer and a maximizer.

    ``flow_map(x, u_C)`` and ``jump_map(x, u_D)`` take the stacked inputs
    ``u_C = (u_C1, u_C2)`` and ``u_D = (u_D1, u_D2)``. ``flow_affine`` and
    ``jump_affine``, when set, return ``(f0, B)`` with ``F(x, u) = f0 + B u``
    (resp. ``G``); they enable the analytic min-max computations.
    """

    n: int
    dims: InputDims
    flow_map: Callable[[Vec, Vec], Vec]
    jump_map: Callable[[Vec, Vec], Vec]
    flow_set: Region
    jump_set: Region
    terminal_set: Region = field(default_factory=Region.empty)
    flow_affine: Optional[Callable[[Vec], tuple[Vec, np.ndarray]]] = None
    jump_affine: Optional[Callable[[Vec], tuple[Vec, np.ndarray]]] = None
    name: str = ""
    # Set on closed-loop systems.
    law: Optional["FeedbackLaw"] = field(default=None, compare=False)
    open_loop: Optional["GameSystem"] = field(default=None, compare=False, repr=False)

    def F(self, x, uC=None) -> Vec:
        uC = np.zeros(self.dims.mC) if uC is None else np.asarray(uC, dtype=float)
        return np.asarray(self.flow_map(np.asarray(x, dtype=float), uC), dtype=float).reshape(self.n)

    def G(self, x, uD=None) -> Vec:
        uD = np.zeros(self.dims.mD) if uD is None else np.asarray(uD, dtype=float)
        return np.asarray(self.jump_map(np.asarray(x, dtype=float), uD), dtype=float).reshape(self.n)

    @property
    def is_closed_loop(self) -> bool:
        return self.law is not None

    def lipschitz_estimate(self, points, uC=None, h: float = 1e-6) -> float:
        """Largest difference quotient of ``F`` in ``x`` over sample points."""
        worst = 0.0
        for x in points:
            x = np.asarray(x, dtype=float)
            fx = self.F(x, uC)
            for i in range(self.n):
                e = np.zeros(self.n)
                e[i] = h
                worst = max(worst, float(np.linalg.norm(self.F(x + e, uC) - fx)) / h)
        return worst


def _block(fn, m):
    if fn is None:
        return lambda x: np.zeros(m)
    return fn


@dataclass(frozen=True)
class FeedbackLaw:
    """State feedback ``kappa = (kappa_C1, kappa_C2, kappa_D1, kappa_D2)``."""

    dims: InputDims
    kappa_C1: Optional[Callable[[Vec], Vec]] = None
    kappa_C2: Optional[Callable[[Vec], Vec]] = None
    kappa_D1: Optional[Callable[[Vec], Vec]] = None
    kappa_D2: Optional[Callable[[Vec], Vec]] = None
    # Stacked gains of linear laws: u_C = K_C x[select], u_D = K_D x[select].
    K_C: Optional[np.ndarray] = field(default=None, compare=False, repr=False)
    K_D: Optional[np.ndarray] = field(default=None, compare=False, repr=False)
    select: Optional[slice] = field(default=None, compare=False, repr=False)

    def _eval(self, fn, m, x):
        if m == 0:
            return np.zeros(0)
        out = np.asarray(_block(fn, m)(np.asarray(x, dtype=float)), dtype=float).reshape(-1)
        if out.shape != (m,):
            raise DimensionMismatch(f"feedback component returned {out.shape}, expected ({m},)")
        return out

    def C1(self, x):
        return self._eval(self.kappa_C1, self.dims.mC1, x)

    def C2(self, x):
        return self._eval(self.kappa_C2, self.dims.mC2, x)

    def D1(self, x):
        return self._eval(self.kappa_D1, self.dims.mD1, x)

    def D2(self, x):
        return self._eval(self.kappa_D2, self.dims.mD2, x)

    def flow(self, x) -> Vec:
        if self.K_C is not None:
            return self.K_C @ x[self.select or slice(None)]
        return np.concatenate([self.C1(x), self.C2(x)])

    def jump(self, x) -> Vec:
        if self.K_D is not None:
            return self.K_D @ x[self.select or slice(None)]
        return np.concatenate([self.D1(x), self.D2(x)])

    def scaled(self, eps_u: float, eps_w: float) -> "FeedbackLaw":
        """``(eps_u * kappa_1, eps_w * kappa_2)`` on both flows and jumps."""
        d = self.dims
        wc = np.r_[np.full(d.mC1, eps_u), np.full(d.mC2, eps_w)][:, None]
        wd = np.r_[np.full(d.mD1, eps_u), np.full(d.mD2, eps_w)][:, None]
        return FeedbackLaw(
            self.dims,
            lambda x: eps_u * self.C1(x),
            lambda x: eps_w * self.C2(x),
            lambda x: eps_u * self.D1(x),
            lambda x: eps_w * self.D2(x),
            K_C=None if self.K_C is None else wc * self.K_C,
            K_D=None if self.K_D is None else wd * self.K_D,
            select=self.select,
        )

    def with_components(self, **kw) -> "FeedbackLaw":
        return replace(self, **kw)

    @classmethod
    def zero(cls, dims: InputDims) -> "FeedbackLaw":
        return cls(dims)

    @classmethod
    def linear(cls, KC1=None, KC2=None, KD1=None, KD2=None, n: int | None = None, select=None) -> "FeedbackLaw":
        """``u = K x_s`` per component, where ``x_s = x[select]`` (all of ``x`` by default)."""
        mats = [None if K is None else np.atleast_2d(np.asarray(K, dtype=float)) for K in (KC1, KC2, KD1, KD2)]
        dims = InputDims(*[0 if K is None else K.shape[0] for K in mats])
        sel = slice(None) if select is None else select

        def mk(K):
            if K is None:
                return None
            return lambda x, K=K: K @ np.asarray(x, dtype=float)[sel]

        width = next((K.shape[1] for K in mats if K is not None), n or 0)
        blocks = [np.zeros((0, width)) if K is None else K for K in mats]
        return cls(dims, *[mk(K) for K in mats], K_C=np.vstack(blocks[:2]), K_D=np.vstack(blocks[2:]),
                   select=select)


def close_loop(sys: GameSystem, law: FeedbackLaw) -> GameSystem:
    """The autonomous system ``H_kappa``."""
    if tuple(sys.dims) != tuple(law.dims):
        raise DimensionMismatch(f"law dims {tuple(law.dims)} do not match system dims {tuple(sys.dims)}")
    x_probe = np.zeros(sys.n)
    law.flow(x_probe)
    law.jump(x_probe)

    fmap, gmap = sys.flow_map, sys.jump_map

    def flow_map(x, _u):
        return fmap(x, law.flow(x))

    def jump_map(x, _u):
        return gmap(x, law.jump(x))

    def lift(region: Region) -> Region:
        # Sets are input independent, so C_kappa = Pi(C) and D_kappa = Pi(D).
        return region

    return GameSystem(
        n=sys.n,
        dims=InputDims(),
        flow_map=flow_map,
        jump_map=jump_map,
        flow_set=lift(sys.flow_set),
        jump_set=lift(sys.jump_set),
        terminal_set=sys.terminal_set,
        name=f"{sys.name}[closed]" if sys.name else "closed",
        law=law,
        open_loop=sys,
    )


def _sym(M) -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return 0.5 * (M + M.T)


def _mat(M, rows, cols=None) -> np.ndarray:
    if M is None:
        return np.zeros((rows, cols if cols is not None else rows))
    A = np.asarray(M, dtype=float)
    if A.ndim == 0:
        A = A.reshape(1, 1)
    elif A.ndim == 1:
        A = A.reshape(rows, -1)
    return A


@dataclass(frozen=True)
class QuadraticGameSpec:
    """Matrix data of the linear-quadratic game families.

    ``R_C2`` and ``R_D2`` are stored negative definite, as the cost uses them.
    Missing blocks (``None``) are zero with zero columns; ``has_flow`` /
    ``has_jumps`` mark the set being empty.
    """

    A_C: np.ndarray
    B_C1: np.ndarray
    B_C2: np.ndarray
    Q_C: np.ndarray
    R_C1: np.ndarray
    R_C2: np.ndarray
    A_D: np.ndarray
    B_D1: np.ndarray
    B_D2: np.ndarray
    Q_D: np.ndarray
    R_D1: np.ndarray
    R_D2: np.ndarray
    T1: Optional[float] = None
    T2: Optional[float] = None
    has_flow: bool = True
    has_jumps: bool = True
    P_terminal: Optional[np.ndarray] = None

    @classmethod
    def create(
        cls,
        n: int,
        A_C=None, B_C1=None, B_C2=None, Q_C=None, R_C1=None, R_C2=None,
        A_D=None, B_D1=None, B_D2=None, Q_D=None, R_D1=None, R_D2=None,
        T1=None, T2=None, has_flow=True, has_jumps=True, P_terminal=None,
    ) -> "QuadraticGameSpec":
        def inp(B, R):
            if B is None:
                return np.zeros((n, 0)), np.zeros((0, 0))
            B = _mat(B, n)
            m = B.shape[1]
            return B, _sym(_mat(R, m))

        BC1, RC1 = inp(B_C1, R_C1)
        BC2, RC2 = inp(B_C2, R_C2)
        BD1, RD1 = inp(B_D1, R_D1)
        BD2, RD2 = inp(B_D2, R_D2)
        spec = cls(
            A_C=_mat(A_C, n), B_C1=BC1, B_C2=BC2, Q_C=_sym(_mat(Q_C, n)), R_C1=RC1, R_C2=RC2,
            A_D=_mat(A_D, n), B_D1=BD1, B_D2=BD2, Q_D=_sym(_mat(Q_D, n)), R_D1=RD1, R_D2=RD2,
            T1=None if T1 is None else float(T1), T2=None if T2 is None else float(T2),
            has_flow=has_flow, has_jumps=has_jumps,
            P_terminal=None if P_terminal is None else _sym(_mat(P_terminal, n)),
        )
        spec.validate()
        return spec

    @property
    def n(self) -> int:
        return self.A_C.shape[0]

    @property
    def dims(self) -> InputDims:
        return InputDims(self.B_C1.shape[1], self.B_C2.shape[1], self.B_D1.shape[1], self.B_D2.shape[1])

    @property
    def B_C(self) -> np.ndarray:
        return np.hstack([self.B_C1, self.B_C2])

    @property
    def B_D(self) -> np.ndarray:
        return np.hstack([self.B_D1, self.B_D2])

    @property
    def R_C(self) -> np.ndarray:
        return _blkdiag(self.R_C1, self.R_C2)

    @property
    def R_D(self) -> np.ndarray:
        return _blkdiag(self.R_D1, self.R_D2)

    @property
    def has_timer(self) -> bool:
        return self.T1 is not None and self.T2 is not None

    def validate(self, tol: float = 1e-12) -> None:
        n = self.n
        for name in ("A_C", "A_D", "Q_C", "Q_D"):
            if getattr(self, name).shape != (n, n):
                raise DimensionMismatch(f"{name} must be {n}x{n}")
        for B, R, name in (
            (self.B_C1, self.R_C1, "C1"), (self.B_C2, self.R_C2, "C2"),
            (self.B_D1, self.R_D1, "D1"), (self.B_D2, self.R_D2, "D2"),
        ):
            if B.shape[0] != n or R.shape != (B.shape[1], B.shape[1]):
                raise DimensionMismatch(f"B_{name}/R_{name} shapes are inconsistent")
        for M, name in ((self.Q_C, "Q_C"), (self.Q_D, "Q_D")):
            if np.linalg.eigvalsh(M).min() < -tol:
                raise DefinitenessViolated(f"{name} must be positive semidefinite")
        for M, sign, name in ((self.R_C1, 1, "R_C1"), (self.R_D1, 1, "R_D1"), (self.R_C2, -1, "-R_C2"), (self.R_D2, -1, "-R_D2")):
            if M.size and np.linalg.eigvalsh(sign * M).min() <= tol:
                raise DefinitenessViolated(f"{name} must be positive definite")
        if (self.T1 is None) != (self.T2 is None):
            raise MissingTimer("both timer thresholds are needed")
        if self.has_timer and not 0.0 <= self.T1 <= self.T2:
            raise ValueError("timer thresholds must satisfy 0 <= T1 <= T2")


def _blkdiag(A, B) -> np.ndarray:
    out = np.zeros((A.shape[0] + B.shape[0], A.shape[1] + B.shape[1]))
    out[: A.shape[0], : A.shape[1]] = A
    out[A.shape[0]:, A.shape[1]:] = B
    return out


def build_timer_lq_system(spec: QuadraticGameSpec, terminal_set: Region | None = None) -> GameSystem:
    """Timer-driven LQ system on the state ``(x_p, tau)``.

    Flows ``(A_C x_p + B_C u_C, 1)`` while ``tau in [0, T2]``; jumps
    ``(A_D x_p + B_D u_D, 0)`` when ``tau in {T1, T2}``.
    """
    if not spec.has_timer:
        raise MissingTimer("spec has no timer thresholds")
    n = spec.n
    A_C, B_C, A_D, B_D = spec.A_C, spec.B_C, spec.A_D, spec.B_D
    zC = np.zeros((1, B_C.shape[1]))
    zD = np.zeros((1, B_D.shape[1]))
    BCa = np.vstack([B_C, zC])
    BDa = np.vstack([B_D, zD])

    def flow_affine(x):
        return np.append(A_C @ x[:n], 1.0), BCa

    def jump_affine(x):
        return np.append(A_D @ x[:n], 0.0), BDa

    lo = np.full(n + 1, -np.inf)
    hi = np.full(n + 1, np.inf)
    lo[n], hi[n] = 0.0, spec.T2
    return GameSystem(
        n=n + 1,
        dims=spec.dims,
        flow_map=lambda x, u: np.append(A_C @ x[:n] + B_C @ u, 1.0),
        jump_map=lambda x, u: np.append(A_D @ x[:n] + B_D @ u, 0.0),
        flow_set=Region.box(lo, hi),
        jump_set=Region.timer_levels(n, (spec.T1, spec.T2)),
        terminal_set=terminal_set if terminal_set is not None else Region.empty(),
        flow_affine=flow_affine,
        jump_affine=jump_affine,
        name="timer_lq",
    )


def build_constant_lq_system(
    spec: QuadraticGameSpec, flow_set: Region, jump_set: Region, terminal_set: Region | None = None
) -> GameSystem:
    """LQ system without timer: ``F = A_C x + B_C u_C``, ``G = A_D x + B_D u_D``."""
    A_C, B_C, A_D, B_D = spec.A_C, spec.B_C, spec.A_D, spec.B_D
    return GameSystem(
        n=spec.n,
        dims=spec.dims,
        flow_map=lambda x, u: A_C @ x + B_C @ u,
        jump_map=lambda x, u: A_D @ x + B_D @ u,
        flow_set=flow_set if spec.has_flow else Region.empty(),
        jump_set=jump_set if spec.has_jumps else Region.empty(),
        terminal_set=terminal_set if terminal_set is not None else Region.empty(),
        flow_affine=lambda x: (A_C @ x, B_C),
        jump_affine=lambda x: (A_D @ x, B_D),
        name="constant_lq",
    )
