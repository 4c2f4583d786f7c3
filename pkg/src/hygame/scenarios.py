"""Builtin example games and the JSON scenario loader."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np

from .certificate import ValueCertificate
from .cost import StageCosts
from .domain import InputDims
from .errors import ScenarioFormatError, UnknownScenario
from .hjbi import GridSpec
from .riccati import RiccatiSolution, solve_constant_robust, solve_periodic
from .simulator import Policy, SimConfig
from .stability import TargetSet
from .system import (
    FeedbackLaw,
    GameSystem,
    QuadraticGameSpec,
    Region,
    build_constant_lq_system,
    build_timer_lq_system,
)

BUILTIN = ("lq_periodic_1d", "robust_1d_nonunique", "bouncing_ball", "security_jump")


@dataclass(frozen=True)
class Scenario:
    name: str
    system: GameSystem
    costs: StageCosts
    V: Optional[ValueCertificate]
    law: Optional[FeedbackLaw]
    x0: np.ndarray
    sim: SimConfig
    grid: GridSpec
    target: TargetSet
    spec: Optional[QuadraticGameSpec] = None
    riccati: Optional[RiccatiSolution] = None
    params: dict = field(default_factory=dict)

    def __iter__(self):
        # Unpacks as (system, costs, spec, V).
        return iter((self.system, self.costs, self.spec, self.V))


# --- lq_periodic_1d ------------------------------------------------------------

LQ_PERIODIC = dict(A_C=1.8, B_C1=1.0, B_C2=1.0, Q_C=0.1, R_C1=1.304, R_C2=-4.0,
                   A_D=2.0, B_D1=1.0, B_D2=1.0, Q_D=1.0, R_D1=1.304, R_D2=-8.0, T1=1.0, T2=1.0)


def timer_scenario(spec: QuadraticGameSpec, name: str, x0=None, sol: RiccatiSolution | None = None) -> Scenario:
    sol = sol or solve_periodic(spec)
    n = spec.n
    sys = replace(build_timer_lq_system(spec), name=name)
    V = ValueCertificate.timer_quadratic(sol.P_at, sol.dP_at, n)
    sel = slice(0, n)
    base = StageCosts.quadratic(spec.Q_C, spec.R_C, spec.Q_D, spec.R_D, state_slice=sel)
    costs = StageCosts(base.L_C, base.L_D, V.value, True)
    x0 = np.append(np.ones(n), 0.0) if x0 is None else np.asarray(x0, dtype=float)
    box = tuple([(-2.0, 2.0)] * n + [(0.0, spec.T2)])
    grid = GridSpec(box, points=[21] * n + [11], input_box=(-20.0, 20.0))
    target = TargetSet.origin(n, coords=list(range(n)))
    sim = SimConfig(dt_max=1e-3, t_budget=5.0, j_budget=100, policy=Policy.JUMP)
    return Scenario(name, sys, costs, V, sol.law, x0, sim, grid, target, spec, sol, {})


@lru_cache(maxsize=None)
def _lq_periodic() -> Scenario:
    spec = QuadraticGameSpec.create(1, **LQ_PERIODIC)
    return timer_scenario(spec, "lq_periodic_1d", x0=[1.0, 0.0])


# --- robust_1d_nonunique --------------------------------------------------------

ROBUST_1D = dict(a=-1.0, b1=1.0, b2=1.0, delta=2.0, mu=1.0, sigma=0.5, Q_C=1.0, R_C1=1.304, R_C2=-4.0)


def robust_1d_P(a, b1, b2, Q_C, R_C1, R_C2) -> float:
    """Positive root of ``Q_C + 2 P a - P^2 (b1^2/R_C1 + b2^2/R_C2) = 0``."""
    s = b1 * b1 / R_C1 + b2 * b2 / R_C2
    return (a + math.sqrt(a * a + Q_C * s)) / s


def robust_1d(**overrides) -> Scenario:
    p = {**ROBUST_1D, **overrides}
    a, b1, b2 = p["a"], p["b1"], p["b2"]
    R1, R2, Q = p["R_C1"], p["R_C2"], p["Q_C"]
    P = p.get("P", robust_1d_P(a, b1, b2, Q, R1, R2))
    sigma = p["sigma"]
    B = np.array([[b1, b2]])
    sys = GameSystem(
        n=1,
        dims=InputDims(1, 1, 0, 0),
        flow_map=lambda x, u: a * x + B @ u,
        jump_map=lambda x, u: np.array([sigma]),
        flow_set=Region.box([0.0], [p["delta"]]),
        jump_set=Region.point(0, p["mu"]),
        flow_affine=lambda x: (a * x, B),
        jump_affine=lambda x: (np.array([sigma]), np.zeros((1, 0))),
        name="robust_1d_nonunique",
    )
    costs = StageCosts(
        lambda x, u: float(Q * x[0] ** 2 + R1 * u[0] ** 2 + R2 * u[1] ** 2),
        lambda x, u: float(P * (x[0] ** 2 - sigma ** 2)),
        lambda x: float(P * x[0] ** 2),
        True,
    )
    V = ValueCertificate.quadratic([[P]])
    g1, g2 = -b1 * P / R1, -b2 * P / R2
    law = FeedbackLaw.linear([[g1]], [[g2]])
    spec = QuadraticGameSpec.create(1, A_C=a, B_C1=b1, B_C2=b2, Q_C=Q, R_C1=R1, R_C2=R2, has_jumps=False)
    grid = GridSpec(((0.0, p["delta"]),), 50, input_box=(-2.0, 2.0))
    sim = SimConfig(dt_max=1e-3, t_budget=10.0, policy=Policy.BOTH, max_branches=4)
    return Scenario(
        "robust_1d_nonunique", sys, costs, V, law, np.array([p["delta"]]), sim, grid,
        TargetSet.origin(1), spec, None, {**p, "P": P, "gains": (g1, g2)},
    )


# --- bouncing ball ------------------------------------------------------------------

BOUNCING = dict(lam=0.8, R_D1=10.0, R_D2=-20.0)


def bouncing_Q_D(lam, R1, R2) -> float:
    return (-2 * R1 * R2 * lam ** 2 + R1 + R2 + 2 * R1 * R2) / (2 * R1 + 2 * R2 + 4 * R1 * R2)


def bouncing_gains(lam, R1, R2) -> tuple[float, float]:
    den = R1 + R2 + 2 * R1 * R2
    return R2 * lam / den, R1 * lam / den


def bouncing_ball(terminal: bool = True, **overrides) -> Scenario:
    p = {**BOUNCING, **overrides}
    lam, R1, R2 = p["lam"], p["R_D1"], p["R_D2"]
    Q_D = p.get("Q_D", bouncing_Q_D(lam, R1, R2))
    k1, k2 = bouncing_gains(lam, R1, R2)
    BD = np.array([[0.0, 0.0], [1.0, 1.0]])
    X = Region.box([0.0, -0.37], [0.3, 0.37]) if terminal else Region.empty()
    sys = GameSystem(
        n=2,
        dims=InputDims(0, 0, 1, 1),
        flow_map=lambda x, u: np.array([x[1], -1.0]),
        jump_map=lambda x, u: np.array([0.0, -lam * x[1] + u[0] + u[1]]),
        flow_set=Region.box([0.0, -np.inf], [np.inf, np.inf]),
        jump_set=Region.hyperplane([1.0, 0.0], 0.0, ineqs=(lambda x: -x[1],)),
        terminal_set=X,
        flow_affine=lambda x: (np.array([x[1], -1.0]), np.zeros((2, 0))),
        jump_affine=lambda x: (np.array([0.0, -lam * x[1]]), BD),
        name="bouncing_ball",
    )
    V = ValueCertificate.custom(
        lambda x: float(x[0] + 0.5 * x[1] ** 2),
        lambda x: np.array([1.0, x[1]]),
        2,
        is_quadratic=True,
        name="x1+x2^2/2",
    )
    costs = StageCosts(
        lambda x, u: 0.0,
        lambda x, u: float(Q_D * x[1] ** 2 + R1 * u[0] ** 2 + R2 * u[1] ** 2),
        V.value,
        True,
    )
    law = FeedbackLaw.linear(KD1=[[0.0, k1]], KD2=[[0.0, k2]])
    grid = GridSpec(((0.0, 2.0), (-3.0, 3.0)), [21, 31], input_box=(-1.0, 1.0))
    # Flight times sum to about 15 s before the bounces accumulate.
    sim = SimConfig(dt_max=1e-3, t_budget=12.0 if terminal else 20.0, j_budget=500, policy=Policy.JUMP)
    name = "bouncing_ball" if terminal else "bouncing_ball_zeno"
    return Scenario(
        name, sys, costs, V, law, np.array([1.0, 1.0]), sim, grid, TargetSet.origin(2), None, None,
        {**p, "Q_D": Q_D, "gains": (k1, k2), "ratio": -lam + k1 + k2, "terminal": terminal},
    )


# --- security_jump -------------------------------------------------------------------

SECURITY = dict(lam=0.8, R_D1=10.0, R_D2=-20.0)


def security_Q_D(lam, R1, R2) -> np.ndarray:
    """Jump weight for which ``P = I`` solves the jump Riccati equation."""
    Rv = np.array([[R1 + 1.0, 1.0], [1.0, R2 + 1.0]])
    w = float(np.ones(2) @ np.linalg.solve(Rv, np.ones(2)))
    return np.diag([1.0, 1.0 - lam ** 2 + lam ** 2 * w])


def security_jump(**overrides) -> Scenario:
    p = {**SECURITY, **overrides}
    lam, R1, R2 = p["lam"], p["R_D1"], p["R_D2"]
    Q_D = security_Q_D(lam, R1, R2)
    spec = QuadraticGameSpec.create(
        2, A_D=[[0.0, 0.0], [0.0, -lam]], B_D1=[[0.0], [1.0]], B_D2=[[0.0], [1.0]],
        Q_D=Q_D, R_D1=R1, R_D2=R2, has_flow=False,
    )
    rot = lambda x: np.array([x[1], -x[0]])
    from .riccati import solve_security

    sol = solve_security(spec, rot, [(0.0, 2.0), (-2.0, 2.0)], n_check=2000)
    A, B = spec.A_D, spec.B_D
    sys = GameSystem(
        n=2,
        dims=spec.dims,
        flow_map=lambda x, u: rot(x),
        jump_map=lambda x, u: A @ x + B @ u,
        flow_set=Region.box([0.0, -np.inf], [np.inf, np.inf]),
        jump_set=Region.hyperplane([1.0, 0.0], 0.0, ineqs=(lambda x: -x[1],)),
        flow_affine=lambda x: (rot(x), np.zeros((2, 0))),
        jump_affine=lambda x: (A @ x, B),
        name="security_jump",
    )
    V = ValueCertificate.quadratic(sol.P0)
    costs = StageCosts.quadratic(np.zeros((2, 2)), np.zeros((0, 0)), Q_D, spec.R_D, P_q=sol.P0)
    grid = GridSpec(((0.0, 2.0), (-2.0, 2.0)), [21, 21], input_box=(-1.0, 1.0))
    sim = SimConfig(dt_max=1e-3, t_budget=20.0, j_budget=500, policy=Policy.JUMP)
    KD1, KD2 = sol.gains_at()["KD1"], sol.gains_at()["KD2"]
    ratio = -lam + float(KD1[0, 1] + KD2[0, 1])
    return Scenario(
        "security_jump", sys, costs, V, sol.law, np.array([1.0, 0.0]), sim, grid, TargetSet.origin(2),
        spec, sol, {**p, "Q_D": Q_D, "ratio": ratio},
    )


@lru_cache(maxsize=None)
def _cached(name: str) -> Scenario:
    if name == "lq_periodic_1d":
        return _lq_periodic()
    if name == "robust_1d_nonunique":
        return robust_1d()
    if name == "bouncing_ball":
        return bouncing_ball()
    if name == "bouncing_ball_zeno":
        return bouncing_ball(terminal=False)
    if name == "security_jump":
        return security_jump()
    raise UnknownScenario(name)


def builtin_scenario(name: str) -> Scenario:
    """One of the builtin games; ``bouncing_ball_zeno`` drops the terminal set."""
    if name not in BUILTIN + ("bouncing_ball_zeno",):
        raise UnknownScenario(f"unknown scenario {name!r}; builtin: {', '.join(BUILTIN)}")
    return _cached(name)


# --- JSON scenarios ---------------------------------------------------------------

def _region(obj, n) -> Region:
    if obj is None:
        return Region.everything()
    kind = obj.get("kind")
    if kind == "all":
        return Region.everything()
    if kind == "empty":
        return Region.empty()
    if kind == "box":
        lo = [(-np.inf if v is None else v) for v in obj["lo"]]
        hi = [(np.inf if v is None else v) for v in obj["hi"]]
        if len(lo) != n or len(hi) != n:
            raise ScenarioFormatError("box bounds must have one entry per state")
        return Region.box(lo, hi)
    raise ScenarioFormatError(f"unsupported set kind {kind!r}")


def scenario_from_dict(d: dict) -> Scenario:
    """Linear-quadratic scenario from its JSON description."""
    try:
        n = int(d["n"])
        flow, jump, costs = d.get("flow", {}), d.get("jump", {}), d.get("costs", {})
        for part in (flow, jump):
            if part and part.get("kind", "linear") != "linear":
                raise ScenarioFormatError("custom maps are only available for builtin scenarios")
        timer = d.get("timer")
        spec = QuadraticGameSpec.create(
            n,
            A_C=flow.get("A_C"), B_C1=flow.get("B_C1"), B_C2=flow.get("B_C2"),
            Q_C=costs.get("Q_C"), R_C1=costs.get("R_C1"), R_C2=costs.get("R_C2"),
            A_D=jump.get("A_D"), B_D1=jump.get("B_D1"), B_D2=jump.get("B_D2"),
            Q_D=costs.get("Q_D"), R_D1=costs.get("R_D1"), R_D2=costs.get("R_D2"),
            T1=None if timer is None else timer["T1"], T2=None if timer is None else timer["T2"],
            has_flow=bool(flow), has_jumps=bool(jump),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioFormatError(f"bad scenario: {exc}") from exc
    name = d.get("name", "custom")
    if timer is not None:
        sc = timer_scenario(spec, name, d.get("x0"))
        if "terminal_set" in d:
            ts = dict(d["terminal_set"])
            if ts.get("kind") == "box" and len(ts.get("lo", ())) == n:
                # A plant-state box leaves the timer unconstrained.
                ts["lo"], ts["hi"] = list(ts["lo"]) + [None], list(ts["hi"]) + [None]
            sc = replace(sc, system=replace(sc.system, terminal_set=_region(ts, n + 1)))
        return sc
    sol = solve_constant_robust(spec)
    sys = replace(
        build_constant_lq_system(
            spec,
            _region(d.get("flow_set"), n),
            _region(d.get("jump_set", {"kind": "empty"}), n),
            _region(d.get("terminal_set", {"kind": "empty"}), n),
        ),
        name=name,
    )
    V = ValueCertificate.quadratic(sol.P0)
    base = StageCosts.quadratic(spec.Q_C, spec.R_C, spec.Q_D, spec.R_D)
    sc_costs = StageCosts(base.L_C, base.L_D, V.value, True)
    x0 = np.asarray(d.get("x0", np.ones(n)), dtype=float)
    grid = GridSpec(tuple([(-2.0, 2.0)] * n), 11, input_box=(-5.0, 5.0))
    sim = SimConfig(t_budget=float(d.get("t_budget", 10.0)))
    return Scenario(name, sys, sc_costs, V, sol.law, x0, sim, grid, TargetSet.origin(n), spec, sol, {})


def load_scenario(path) -> Scenario:
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioFormatError(f"cannot read scenario {path}: {exc}") from exc
    return scenario_from_dict(d)


def resolve_scenario(ref: str) -> Scenario:
    """Builtin name first, then a JSON file path."""
    if ref in BUILTIN or ref == "bouncing_ball_zeno":
        return builtin_scenario(ref)
    if Path(ref).is_file():
        return load_scenario(ref)
    raise UnknownScenario(f"{ref!r} is neither a builtin scenario nor a file")
