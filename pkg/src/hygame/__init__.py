"""Two-player zero-sum hybrid games: simulation, costs, Riccati solvers and certificate checks."""

from .certificate import ValueCertificate, gradient_check
from .cost import CostReport, Sense, StageCosts, check_flow_certificate, check_jump_certificate, evaluate_cost, telescoped_bound
from .domain import (
    HybridArc,
    HybridInputSignal,
    HybridTime,
    HybridTimeDomain,
    InputDims,
    SolutionPair,
    TerminalStatus,
    eval_arc,
    remainder,
    truncate,
)
from .errors import *  # noqa: F401,F403
from .hjbi import GridSpec, Order, check_equivalent_conditions, check_hjbi, hamiltonian_minmax, jump_minmax, saddle_sweep, synthesize_feedback
from .riccati import RiccatiSolution, integrate_riccati_ode, jump_update, solve_constant_robust, solve_periodic, solve_security
from .scenarios import Scenario, builtin_scenario, resolve_scenario
from .simulator import Policy, SimConfig, simulate, simulate_open_loop
from .stability import TargetSet, check_lyapunov_decrease, check_pd, check_stability, check_trajectory_convergence
from .system import FeedbackLaw, GameSystem, QuadraticGameSpec, Region, build_timer_lq_system, close_loop

__version__ = "0.1.0"
