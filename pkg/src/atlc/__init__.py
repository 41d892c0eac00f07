"""Event-triggered adaptive Taylor-Lagrange control for input-constrained
affine systems, with fixed-time-scale and second-order-barrier baselines
and an adaptive-cruise-control case study."""

from .controller import (
    ControlDecision,
    ControllerConfig,
    ControllerKind,
    EventRecord,
    SimulationError,
    Summary,
    TrajectoryLog,
    ZenoError,
    compute_control,
    fallback_control,
    simulate_closed_loop,
)
from .margin import MarginMap, is_feasible, margin, tau_star_scan
from .model import (
    AccParams,
    SystemModel,
    acc_clf_terms,
    acc_dynamics_rhs,
    acc_lie_stack,
    acc_model,
    make_state,
    resistance_force,
)
from .qp import ConstraintRow, QpInstance, QpSolution, oracle_grid_solve, solve_qp
from .robust_bounds import BoundConfig, Box, g_ratlc, h_ratlc, make_box
from .sim import IntegratorConfig, IntegrationError, Segment, integrate_until_trigger
from .tau_select import (
    ControlContext,
    TauDecision,
    TauSelectConfig,
    rollout_min_h,
    select_tau,
)

__version__ = "0.1.0"

__all__ = [
    "AccParams",
    "BoundConfig",
    "Box",
    "ConstraintRow",
    "ControlContext",
    "ControlDecision",
    "ControllerConfig",
    "ControllerKind",
    "EventRecord",
    "IntegrationError",
    "IntegratorConfig",
    "MarginMap",
    "QpInstance",
    "QpSolution",
    "Segment",
    "SimulationError",
    "Summary",
    "SystemModel",
    "TauDecision",
    "TauSelectConfig",
    "TrajectoryLog",
    "ZenoError",
    "acc_clf_terms",
    "acc_dynamics_rhs",
    "acc_lie_stack",
    "acc_model",
    "compute_control",
    "fallback_control",
    "g_ratlc",
    "h_ratlc",
    "is_feasible",
    "integrate_until_trigger",
    "make_box",
    "make_state",
    "margin",
    "oracle_grid_solve",
    "resistance_force",
    "rollout_min_h",
    "select_tau",
    "simulate_closed_loop",
    "solve_qp",
    "tau_star_scan",
]
