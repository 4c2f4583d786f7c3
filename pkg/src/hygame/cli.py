"""``hygame`` command line: simulate, solve, check, sweep and evaluate-cost.

Exit codes: 0 success, 1 a check found violations, 2 usage or input error,
3 numerical failure. Every output file embeds the hash of the run manifest,
which is computed from the command and its arguments (not the timestamp).
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .cost import Sense, check_flow_certificate, check_jump_certificate, evaluate_cost
from .domain import read_csv, write_csv
from .errors import HygameError, NumericalError
from .hjbi import GridSpec, check_equivalent_conditions, check_hjbi, saddle_sweep
from .riccati import solve_constant_robust, solve_periodic, solve_security
from .scenarios import resolve_scenario
from .simulator import Policy, simulate
from .stability import check_stability
from .system import close_loop

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


@dataclass
class RunManifest:
    command: str
    scenario: str
    config: dict
    version: str = __version__
    timestamp: str = field(default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat())
    outputs: list = field(default_factory=list)

    @property
    def hash(self) -> str:
        payload = {"command": self.command, "scenario": self.scenario, "config": self.config, "version": self.version}
        blob = json.dumps(payload, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "scenario": self.scenario,
            "config_hash": self.hash,
            "version": self.version,
            "timestamp": self.timestamp,
            "outputs": [str(p) for p in self.outputs],
        }


# --- parsing helpers ----------------------------------------------------------

def parse_vector(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",") if v.strip()], dtype=float)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad vector {text!r}") from exc


def parse_range(text: str) -> np.ndarray:
    """``lo:hi:n`` to ``n`` evenly spaced values."""
    try:
        lo, hi, n = text.split(":")
        return np.linspace(float(lo), float(hi), int(n))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad range {text!r}, expected lo:hi:n") from exc


def parse_grid(text: str) -> tuple:
    """``lo,hi,n;lo,hi,n`` to a box and per-axis point counts."""
    box, pts = [], []
    try:
        for part in text.split(";"):
            lo, hi, n = part.split(",")
            box.append((float(lo), float(hi)))
            pts.append(int(n))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}, expected lo,hi,n;...") from exc
    return tuple(box), pts


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items() if not str(k).startswith("_")}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "value") and not isinstance(obj, (str, bytes)) and hasattr(obj, "name"):
        return obj.value
    return obj


# --- output plumbing ------------------------------------------------------------

class Outputs:
    def __init__(self, args, command: str):
        self.dir = Path(args.out_dir or os.environ.get("HYGAME_OUT") or ".")
        cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out_dir")}
        self.manifest = RunManifest(command, str(getattr(args, "scenario", "")), cfg)

    def path(self, name: str) -> Path:
        p = Path(name)
        p = p if p.is_absolute() else self.dir / p
        p.parent.mkdir(parents=True, exist_ok=True)
        self.manifest.outputs.append(p)
        return p

    def json(self, name: str, data: dict) -> Path:
        p = self.path(name)
        body = {"manifest_hash": self.manifest.hash, **_jsonable(data)}
        p.write_text(json.dumps(body, indent=2, sort_keys=False, default=repr) + "\n")
        return p

    def finish(self) -> None:
        p = self.dir / "manifest.json"
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(json.dumps(self.manifest.to_dict(), indent=2) + "\n")


def _grid(args, scenario) -> GridSpec:
    if getattr(args, "grid", None):
        box, pts = args.grid
        return GridSpec(box, pts, input_box=scenario.grid.input_box, input_points=scenario.grid.input_points)
    return scenario.grid


def _jitter(grid: GridSpec, seed) -> np.ndarray:
    pts = grid.states()
    if seed is None:
        return pts
    rng = np.random.default_rng(seed)
    box = np.asarray(grid.box, dtype=float)
    step = (box[:, 1] - box[:, 0]) / np.maximum(np.asarray(grid.points) - 1, 1)
    pts = pts + rng.uniform(-0.25, 0.25, size=pts.shape) * step
    return np.clip(pts, box[:, 0], box[:, 1])


def _sim_config(args, scenario):
    cfg = scenario.sim
    if getattr(args, "policy", None):
        cfg = replace(cfg, policy=Policy(args.policy))
    if getattr(args, "tmax", None) is not None:
        cfg = replace(cfg, t_budget=args.tmax)
    if getattr(args, "jmax", None) is not None:
        cfg = replace(cfg, j_budget=args.jmax)
    if getattr(args, "dt", None) is not None:
        cfg = replace(cfg, dt_max=args.dt)
    return cfg


def _x0(args, scenario) -> np.ndarray:
    x0 = args.x0 if getattr(args, "x0", None) is not None else scenario.x0
    # Timer scenarios accept the plant state alone; the timer starts at zero.
    if scenario.spec is not None and scenario.spec.has_timer and len(x0) == scenario.system.n - 1:
        x0 = np.append(x0, 0.0)
    return np.asarray(x0, dtype=float)


def _residuals(pair, sc) -> dict:
    if sc.V is None:
        return {}
    return {chk.__name__.split("_")[1]: chk(pair, sc.costs, sc.V, Sense.EXACT).to_dict()
            for chk in (check_flow_certificate, check_jump_certificate)}


# --- commands -------------------------------------------------------------------

def cmd_simulate(args) -> int:
    sc = resolve_scenario(args.scenario)
    out = Outputs(args, "simulate")
    cfg = _sim_config(args, sc)
    pairs = simulate(sc.system, _x0(args, sc), cfg, law=sc.law)
    stem = Path(args.out)
    reports = []
    for pair in pairs:
        name = stem if len(pairs) == 1 else stem.with_name(f"{stem.stem}_{pair.branch or 'root'}{stem.suffix}")
        p = out.path(str(name))
        with open(p, "w") as fh:
            write_csv(pair, fh, comment=f"manifest={out.manifest.hash} scenario={sc.name}")
        rep = evaluate_cost(pair, sc.costs)
        reports.append({"trajectory": str(p), "branch": pair.branch, "status": pair.status.value,
                        "jumps": pair.arc.J, **rep.to_dict(), "residuals": _residuals(pair, sc)})
    out.json(args.cost_out or f"{stem.stem}.cost.json", {"scenario": sc.name, "solutions": reports})
    out.finish()
    for r in reports:
        print(f"branch={r['branch'] or '-'} status={r['status']} total={r['total']:.17g}")
    return EXIT_OK


def cmd_evaluate_cost(args) -> int:
    sc = resolve_scenario(args.scenario)
    out = Outputs(args, "evaluate-cost")
    with open(args.traj) as fh:
        pair = read_csv(fh)
    rep = evaluate_cost(pair, sc.costs)
    out.json(args.out, {"scenario": sc.name, "trajectory": str(args.traj), "branch": pair.branch,
                        "status": pair.status.value, **rep.to_dict(), "residuals": _residuals(pair, sc)})
    out.finish()
    print(f"total={rep.total:.17g}")
    return EXIT_OK


def cmd_solve(args) -> int:
    sc = resolve_scenario(args.scenario)
    out = Outputs(args, f"solve {args.kind}")
    spec = sc.spec
    if spec is None:
        raise HygameError(f"scenario {sc.name!r} has no quadratic game data to solve")
    if args.kind == "riccati":
        sol = solve_periodic(spec) if spec.has_timer else solve_constant_robust(spec)
    elif args.kind == "robust":
        sol = solve_constant_robust(spec)
    else:
        zero = np.zeros(sc.system.dims.mC)
        box = sc.grid.box
        sol = solve_security(spec, lambda x: sc.system.flow_map(x, zero), box, seed=args.seed or 0)
    out.json(args.out, {"scenario": sc.name, **sol.to_json()})
    out.finish()
    print(f"kind={sol.kind.value} P0={np.array2string(np.atleast_1d(sol.P0).ravel(), precision=17)}")
    return EXIT_OK


def cmd_check_hjbi(args) -> int:
    sc = resolve_scenario(args.scenario)
    out = Outputs(args, "check hjbi")
    if sc.V is None:
        raise HygameError(f"scenario {sc.name!r} has no value certificate")
    rep = check_hjbi(sc.V, sc.system, sc.costs, _grid(args, sc))
    out.json(args.out, {"scenario": sc.name, **rep.to_dict(args.tol)})
    out.finish()
    print(f"flow={rep.max_flow_residual:.3e} jump={rep.max_jump_residual:.3e} isaacs={rep.max_isaacs_gap:.3e}")
    return EXIT_OK if rep.passed(args.tol) else EXIT_FAIL


def cmd_check_equivalent(args) -> int:
    sc = resolve_scenario(args.scenario)
    out = Outputs(args, "check equivalent")
    rep = check_equivalent_conditions(sc.V, sc.system, sc.costs, sc.law, _grid(args, sc), tol=min(args.tol, 1e-7))
    out.json(args.out, {"scenario": sc.name, **rep.to_dict()})
    out.finish()
    print("passed" if rep.passed else "failed")
    return EXIT_OK if rep.passed else EXIT_FAIL


def _load_batch(path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                continue  # header
    return np.asarray(rows, dtype=float)


def cmd_check_stability(args) -> int:
    sc = resolve_scenario(args.scenario)
    out = Outputs(args, "check stability")
    if args.set != "origin":
        raise HygameError(f"unsupported target set {args.set!r}")
    A = sc.target
    grid = _grid(args, sc)
    batch = _load_batch(args.x0_batch) if args.x0_batch else np.atleast_2d(sc.x0)
    closed = close_loop(sc.system, sc.law)
    rep = check_stability(sc.V, closed, sc.costs, A, _jitter(grid, args.seed), batch, _sim_config(args, sc), tol=args.tol)
    out.json(args.out, {"scenario": sc.name, **rep.to_dict()})
    out.finish()
    print(f"condition={rep.condition_used} passed={rep.passed}")
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_sweep(args) -> int:
    sc = resolve_scenario(args.scenario)
    out = Outputs(args, "sweep saddle")
    eps_u = args.eps
    eps_w = args.eps_w if args.eps_w is not None else args.eps
    cfg = _sim_config(args, sc)
    res = saddle_sweep(sc.system, sc.costs, sc.law, _x0(args, sc), eps_u, eps_w, cfg)
    p = out.path(args.out)
    with open(p, "w") as fh:
        fh.write(f"# manifest={out.manifest.hash} scenario={sc.name}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eps_u", "eps_w", "cost", "status"])
        for eu, ew, c, st in res.rows():
            w.writerow([f"{eu:.17g}", f"{ew:.17g}", f"{c:.17g}", st])
    out.finish()
    ok = res.holds(args.rel)
    print(f"center={res.cost[res.center()]:.17g} violation={res.saddle_violation():.3e} holds={ok}")
    return EXIT_OK if ok else EXIT_FAIL


# --- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hygame", description="Two-player zero-sum hybrid games.")
    ap.add_argument("--version", action="version", version=f"hygame {__version__}")
    ap.add_argument("--out-dir", default=None, help="output directory (default $HYGAME_OUT or .)")
    ap.add_argument("--seed", type=int, default=None, help="seed for grid-sample jitter")
    ap.add_argument("--tol", type=float, default=1e-6, help="pass/fail tolerance of checks")
    sub = ap.add_subparsers(dest="command", required=True)

    def scen(p):
        p.add_argument("--scenario", required=True, help="builtin name or JSON file")

    def simopts(p):
        p.add_argument("--policy", choices=[m.value for m in Policy])
        p.add_argument("--tmax", type=float)
        p.add_argument("--jmax", type=int)
        p.add_argument("--dt", type=float, help="maximum RK4 step")

    p = sub.add_parser("simulate", help="simulate the closed loop and evaluate its cost")
    scen(p)
    simopts(p)
    p.add_argument("--x0", type=parse_vector)
    p.add_argument("--out", default="traj.csv")
    p.add_argument("--cost-out", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate-cost", help="cost of a stored trajectory CSV")
    scen(p)
    p.add_argument("--traj", required=True)
    p.add_argument("--out", default="cost.json")
    p.set_defaults(func=cmd_evaluate_cost)

    p = sub.add_parser("solve", help="Riccati-type solvers")
    p.add_argument("kind", choices=["riccati", "security", "robust"])
    scen(p)
    p.add_argument("--out", default="gains.json")
    p.set_defaults(func=cmd_solve)

    chk = sub.add_parser("check", help="certificate checks").add_subparsers(dest="check", required=True)
    p = chk.add_parser("hjbi")
    scen(p)
    p.add_argument("--grid", type=parse_grid)
    p.add_argument("--out", default="residuals.json")
    p.set_defaults(func=cmd_check_hjbi)
    p = chk.add_parser("equivalent")
    scen(p)
    p.add_argument("--grid", type=parse_grid)
    p.add_argument("--out", default="equivalent.json")
    p.set_defaults(func=cmd_check_equivalent)
    p = chk.add_parser("stability")
    scen(p)
    simopts(p)
    p.add_argument("--set", default="origin")
    p.add_argument("--grid", type=parse_grid)
    p.add_argument("--x0-batch", default=None)
    p.add_argument("--out", default="stability.json")
    p.set_defaults(func=cmd_check_stability)

    sw = sub.add_parser("sweep", help="parameter sweeps").add_subparsers(dest="sweep", required=True)
    p = sw.add_parser("saddle")
    scen(p)
    simopts(p)
    p.add_argument("--x0", type=parse_vector)
    p.add_argument("--eps", type=parse_range, default=parse_range("0.5:1.5:11"))
    p.add_argument("--eps-w", type=parse_range, default=None)
    p.add_argument("--rel", type=float, default=1e-6)
    p.add_argument("--out", default="saddle.csv")
    p.set_defaults(func=cmd_sweep)
    return ap


_VALUE_FLAGS = ("--x0", "--grid", "--eps", "--eps-w")


def _glue_values(argv: list[str]) -> list[str]:
    """Join ``--x0 -1,2`` into ``--x0=-1,2`` so argparse accepts a leading minus."""
    out, i = [], 0
    while i < len(argv):
        a = argv[i]
        if a in _VALUE_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-") and argv[i + 1][1:2].isdigit():
            out.append(f"{a}={argv[i + 1]}")
            i += 2
            continue
        out.append(a)
        i += 1
    return out


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(_glue_values(list(sys.argv[1:] if argv is None else argv)))
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"hygame: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (HygameError, OSError) as exc:
        print(f"hygame: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
