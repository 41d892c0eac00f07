"""Rollout-based selection of the safety-condition time scale.

At each event the controller evaluates a finite set of candidate time
scales.  For every candidate the robust safety QP is solved; if feasible,
the closed system is rolled out under the resulting constant input over a
lookahead horizon and the predicted minimum of the safety output is
recorded.  The candidate maximizing that prediction wins, ties going to
the smallest time scale (the least restrictive constraint).  Infeasible
candidates keep a -inf sentinel so they lose every comparison.

Candidate evaluations are independent; a worker pool can fan them out and
the final argmax is a deterministic sequential reduction, so the decision
does not depend on worker count or evaluation order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product

import numpy as np

from .constraints import DELTA_CAP, atlc_row_from_stack, build_clf_row, build_qp_instance
from .model import AccParams, SystemModel
from .qp import QpSolution, solve_qp
from .robust_bounds import BoundConfig, Box, GridStack, g_ratlc_from_stack, stack_on_grid
from .sim import IntegratorConfig, integrate_fixed_horizon

Array = np.ndarray


@dataclass(frozen=True)
class TauSelectConfig:
    tau_min: float = 0.05
    tau_max: float = 2.0
    n_candidates: int = 40
    spacing: str = "linear"
    T_look: float = 1.0
    rollout_dt: float = 0.01
    max_workers: int = 1

    def __post_init__(self) -> None:
        if not 0.0 < self.tau_min <= self.tau_max:
            raise ValueError("need 0 < tau_min <= tau_max")
        if self.n_candidates < 1:
            raise ValueError("need at least one candidate time scale")
        if self.spacing not in ("linear", "logarithmic"):
            raise ValueError(f"unknown spacing {self.spacing!r}")
        if self.T_look <= 0.0 or self.rollout_dt <= 0.0:
            raise ValueError("lookahead horizon and sample spacing must be positive")
        if self.max_workers < 1:
            raise ValueError("max_workers must be >= 1")


@dataclass(frozen=True)
class ControlContext:
    """Everything a candidate QP needs besides the time scale."""

    model: SystemModel
    params: AccParams
    bound_cfg: BoundConfig
    integrator_cfg: IntegratorConfig
    objective: str = "acc_effort"
    delta_cap: float = DELTA_CAP


@dataclass(frozen=True)
class CandidateEval:
    tau: float
    feasible: bool
    min_h_pred: float
    qp_objective: float
    u: Array | None
    delta: float | None


@dataclass(frozen=True)
class TauDecision:
    tau_k: float | None
    u_k: Array | None
    delta_k: float | None
    qp_objective: float
    table: tuple[CandidateEval, ...]
    all_infeasible: bool


def candidate_taus(cfg: TauSelectConfig) -> Array:
    if cfg.n_candidates == 1:
        return np.array([cfg.tau_min])
    if cfg.spacing == "linear":
        return np.linspace(cfg.tau_min, cfg.tau_max, cfg.n_candidates)
    return np.geomspace(cfg.tau_min, cfg.tau_max, cfg.n_candidates)


def rollout_min_h(
    x_k: Array,
    u,
    T_look: float,
    model: SystemModel,
    cfg: IntegratorConfig,
    rollout_dt: float = 0.01,
) -> float:
    """Minimum of the safety output along the constant-input rollout,
    over dense samples including both endpoints."""
    _, states = integrate_fixed_horizon(x_k, u, T_look, model, cfg, dt=rollout_dt)
    return float(min(model.lie_stack(s)[0] for s in states))


def solve_event_qp(
    x_k: Array, gs: GridStack, tau: float, clf_row, ctx: ControlContext
) -> QpSolution:
    """Robust safety QP at one candidate time scale.

    The worst-case input gain row depends on the sign of each input entry,
    so one QP is solved per sign orthant of the input box with the matching
    row and orthant restriction, keeping the best feasible solution.  When
    all branch rows coincide (constant input gain over the box) a single QP
    over the full box is equivalent and solved instead.
    """
    model = ctx.model
    branches = [np.array(b) for b in product((1.0, -1.0), repeat=model.q)]
    rows_by_branch = [g_ratlc_from_stack(gs, tau, b) for b in branches]
    same = all(np.array_equal(rows_by_branch[0], r) for r in rows_by_branch[1:])

    def run(branch, restrict: bool) -> QpSolution:
        safety = atlc_row_from_stack(gs, tau, branch)
        if restrict:
            u_lower = np.where(branch > 0, np.maximum(model.u_min, 0.0), model.u_min)
            u_upper = np.where(branch > 0, model.u_max, np.minimum(model.u_max, 0.0))
            if np.any(u_lower > u_upper):
                return QpSolution(
                    values=np.full(model.q + 1, np.nan),
                    objective=math.inf,
                    status="infeasible",
                )
        else:
            u_lower, u_upper = model.u_min, model.u_max
        inst = build_qp_instance(
            [safety, clf_row],
            model,
            ctx.objective,
            x=x_k,
            params=ctx.params,
            u_lower=u_lower,
            u_upper=u_upper,
            delta_cap=ctx.delta_cap,
        )
        return solve_qp(inst)

    if same:
        return run(branches[0], restrict=False)
    best: QpSolution | None = None
    for branch in branches:
        sol = run(branch, restrict=True)
        if sol.status == "optimal" and (best is None or sol.objective < best.objective):
            best = sol
    if best is None:
        return QpSolution(
            values=np.full(model.q + 1, np.nan), objective=math.inf,
            status="infeasible",
        )
    return best


def select_tau(
    x_k: Array, box: Box, cfg: TauSelectConfig, ctx: ControlContext
) -> TauDecision:
    """Evaluate every candidate time scale and return the rollout argmax."""
    x_k = np.asarray(x_k, dtype=float)
    gs = stack_on_grid(box, ctx.model, ctx.bound_cfg)
    clf_row = build_clf_row(x_k, ctx.params.c3, ctx.model)
    taus = candidate_taus(cfg)

    def solve_one(tau: float) -> QpSolution:
        return solve_event_qp(x_k, gs, float(tau), clf_row, ctx)

    if cfg.max_workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.max_workers) as pool:
            solutions = list(pool.map(solve_one, taus))
    else:
        solutions = [solve_one(tau) for tau in taus]

    # identical inputs yield identical rollouts; evaluate each distinct one once
    unique: dict[bytes, float] = {}
    feasible_keys = []
    for sol in solutions:
        if sol.status == "optimal":
            key = sol.values[: ctx.model.q].tobytes()
            unique.setdefault(key, math.nan)
            feasible_keys.append(key)
        else:
            feasible_keys.append(None)

    def roll(key: bytes) -> float:
        u = np.frombuffer(key, dtype=float).copy()
        return rollout_min_h(
            x_k, u, cfg.T_look, ctx.model, ctx.integrator_cfg, cfg.rollout_dt
        )

    keys = list(unique)
    if cfg.max_workers > 1 and len(keys) > 1:
        with ThreadPoolExecutor(max_workers=cfg.max_workers) as pool:
            for key, value in zip(keys, pool.map(roll, keys)):
                unique[key] = value
    else:
        for key in keys:
            unique[key] = roll(key)

    table = []
    for tau, sol, key in zip(taus, solutions, feasible_keys):
        if key is None:
            table.append(CandidateEval(
                tau=float(tau), feasible=False, min_h_pred=-math.inf,
                qp_objective=math.inf, u=None, delta=None,
            ))
        else:
            table.append(CandidateEval(
                tau=float(tau), feasible=True, min_h_pred=unique[key],
                qp_objective=sol.objective, u=sol.values[: ctx.model.q],
                delta=float(sol.values[-1]),
            ))

    best_idx = None
    best_pred = -math.inf
    for i, entry in enumerate(table):
        if entry.feasible and entry.min_h_pred > best_pred:
            best_pred = entry.min_h_pred
            best_idx = i
    if best_idx is None:
        return TauDecision(
            tau_k=None, u_k=None, delta_k=None, qp_objective=math.inf,
            table=tuple(table), all_infeasible=True,
        )
    chosen = table[best_idx]
    return TauDecision(
        tau_k=chosen.tau,
        u_k=chosen.u,
        delta_k=chosen.delta,
        qp_objective=chosen.qp_objective,
        table=tuple(table),
        all_infeasible=False,
    )
