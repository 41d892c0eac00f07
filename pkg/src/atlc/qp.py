"""Small dense box-constrained QP solver with exact active-set enumeration.

The controller QPs have at most three decision variables (inputs plus one
slack) and a handful of inequality rows, so instead of an iterative method
the global optimum is found by enumerating every candidate active set:
each subset of constraints of size <= dim is solved as an
equality-constrained KKT system and kept if it is primal feasible with
nonnegative multipliers.  Strict convexity guarantees the optimum appears
among these candidates.  Infeasibility is certified separately by a
max-min-slack vertex enumeration.  A brute-force grid oracle is included
for testing only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

Array = np.ndarray

FEAS_TOL = 1e-8
MULT_TOL = 1e-9


@dataclass(frozen=True)
class ConstraintRow:
    """One affine inequality over the decision vector: coeffs @ x {>=,<=} rhs."""

    coefficients: Array
    rhs: float
    sense: str

    def __post_init__(self) -> None:
        coeffs = np.asarray(self.coefficients, dtype=float)
        if coeffs.ndim != 1 or not np.all(np.isfinite(coeffs)):
            raise ValueError("row coefficients must be a finite vector")
        if not np.isfinite(self.rhs):
            raise ValueError("row rhs must be finite")
        if self.sense not in ("ge", "le"):
            raise ValueError(f"sense must be 'ge' or 'le', got {self.sense!r}")
        object.__setattr__(self, "coefficients", coeffs)
        object.__setattr__(self, "rhs", float(self.rhs))

    def as_ge(self) -> tuple[Array, float]:
        """Coefficients and rhs normalized to the >= orientation."""
        if self.sense == "ge":
            return self.coefficients, self.rhs
        return -self.coefficients, -self.rhs


@dataclass(frozen=True)
class QpInstance:
    """min sum_i quadratic_diag[i] x_i^2 + linear_cost @ x over rows and box."""

    quadratic_diag: Array
    linear_cost: Array
    rows: tuple[ConstraintRow, ...]
    lower: Array
    upper: Array

    def __post_init__(self) -> None:
        diag = np.asarray(self.quadratic_diag, dtype=float)
        lin = np.asarray(self.linear_cost, dtype=float)
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        dim = diag.shape[0]
        if np.any(diag <= 0.0) or not np.all(np.isfinite(diag)):
            raise ValueError("quadratic weights must be strictly positive")
        for name, vec in (("linear_cost", lin), ("lower", lower), ("upper", upper)):
            if vec.shape != (dim,) or not np.all(np.isfinite(vec)):
                raise ValueError(f"{name} must be a finite vector of length {dim}")
        if np.any(lower > upper):
            raise ValueError("need lower <= upper componentwise")
        rows = tuple(self.rows)
        for row in rows:
            if row.coefficients.shape != (dim,):
                raise ValueError("row length does not match instance dimension")
        object.__setattr__(self, "quadratic_diag", diag)
        object.__setattr__(self, "linear_cost", lin)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "rows", rows)

    @property
    def dim(self) -> int:
        return self.quadratic_diag.shape[0]

    def objective(self, x: Array) -> float:
        return float(self.quadratic_diag @ (x * x) + self.linear_cost @ x)


@dataclass(frozen=True)
class QpSolution:
    values: Array
    objective: float
    status: str  # "optimal" | "infeasible"


def _all_constraints_ge(inst: QpInstance) -> tuple[Array, Array]:
    """Rows plus box faces, all oriented as A @ x >= b."""
    dim = inst.dim
    eye = np.eye(dim)
    blocks_a = [eye, -eye]
    blocks_b = [inst.lower, -inst.upper]
    for row in inst.rows:
        a, b = row.as_ge()
        blocks_a.append(a[None, :])
        blocks_b.append(np.array([b]))
    return np.vstack(blocks_a), np.concatenate(blocks_b)


def solve_qp(inst: QpInstance) -> QpSolution:
    """Global optimum by exhaustive enumeration of candidate active sets.

    Subsets of each size are assembled into one stacked KKT batch and
    solved together; subsets with linearly dependent normals (zero Gram
    determinant) are dropped beforehand, since strict convexity guarantees
    the optimum is certified by some linearly independent subset.
    """
    a_all, b_all = _all_constraints_ge(inst)
    n_con = a_all.shape[0]
    dim = inst.dim
    c = inst.linear_cost
    feas_tol = FEAS_TOL * np.maximum(1.0, np.abs(b_all))  # per constraint
    norms = np.linalg.norm(a_all, axis=1)
    ok_rows = norms > 0.0
    a_unit = np.where(ok_rows[:, None], a_all / np.where(ok_rows, norms, 1.0)[:, None], 0.0)
    b_unit = np.where(ok_rows, b_all / np.where(ok_rows, norms, 1.0), b_all)

    def keep_if_better(x: Array, best) -> tuple[Array | None, float]:
        best_x, best_obj = best
        if np.any(b_all - a_all @ x > feas_tol):
            return best
        obj = inst.objective(x)
        if obj < best_obj:
            return x, obj
        return best

    best: tuple[Array | None, float] = (None, math.inf)
    best = keep_if_better(-c / (2.0 * inst.quadratic_diag), best)

    q2 = 2.0 * np.diag(inst.quadratic_diag)
    usable = np.flatnonzero(ok_rows)
    for size in range(1, dim + 1):
        combos = np.array(list(combinations(usable, size)), dtype=int)
        if combos.size == 0:
            continue
        rows = a_unit[combos]  # (n_combo, size, dim)
        gram = rows @ rows.transpose(0, 2, 1)
        independent = np.abs(np.linalg.det(gram)) > 1e-12
        combos = combos[independent]
        if combos.size == 0:
            continue
        rows = rows[independent]
        n_combo = combos.shape[0]
        k = dim + size
        kkt = np.zeros((n_combo, k, k))
        kkt[:, :dim, :dim] = q2
        kkt[:, :dim, dim:] = -rows.transpose(0, 2, 1)
        kkt[:, dim:, :dim] = rows
        rhs = np.empty((n_combo, k))
        rhs[:, :dim] = -c
        rhs[:, dim:] = b_unit[combos]
        try:
            sols = np.linalg.solve(kkt, rhs[..., None])[..., 0]
        except np.linalg.LinAlgError:
            sols = np.full((n_combo, k), np.nan)
            for i in range(n_combo):
                try:
                    sols[i] = np.linalg.solve(kkt[i], rhs[i])
                except np.linalg.LinAlgError:
                    continue
        finite = np.all(np.isfinite(sols), axis=1)
        residual = np.abs((kkt @ sols[..., None])[..., 0] - rhs)
        res_ok = np.all(residual <= 1e-6 * np.maximum(1.0, np.abs(rhs)), axis=1)
        nonneg = np.all(sols[:, dim:] >= -MULT_TOL, axis=1)
        for i in np.flatnonzero(finite & nonneg & res_ok):
            best = keep_if_better(sols[i, :dim], best)

    best_x, best_obj = best
    if best_x is not None:
        return QpSolution(values=best_x, objective=best_obj, status="optimal")
    if _max_min_slack(inst) > FEAS_TOL:
        # clearly feasible yet no candidate survived: internal failure, do
        # not mask it as infeasibility
        raise RuntimeError(
            "active-set enumeration found no optimum for a feasible instance"
        )
    return QpSolution(
        values=np.full(dim, np.nan), objective=math.inf, status="infeasible"
    )


def _max_min_slack(inst: QpInstance) -> float:
    """Phase-1 certificate: max over the box of the minimum row slack.

    Solved as a vertex enumeration of the lifted feasibility program
    max s subject to row_i @ x - s >= rhs_i and x in the box; the optimum
    of this program sits at a vertex defined by dim+1 active constraints.
    Nonnegative value certifies a feasible instance.
    """
    if not inst.rows:
        return math.inf
    dim = inst.dim
    rows_ge = [row.as_ge() for row in inst.rows]
    # constraints over (x, s), oriented as A @ (x, s) >= b
    eye = np.eye(dim)
    a_parts = [np.hstack([eye, np.zeros((dim, 1))]),
               np.hstack([-eye, np.zeros((dim, 1))])]
    b_parts = [inst.lower, -inst.upper]
    for a, b in rows_ge:
        a_parts.append(np.concatenate([a, [-1.0]])[None, :])
        b_parts.append(np.array([b]))
    a_all = np.vstack(a_parts)
    b_all = np.concatenate(b_parts)
    n_con = a_all.shape[0]

    feas_tol = FEAS_TOL * np.maximum(1.0, np.abs(b_all))
    best = -math.inf
    for active in combinations(range(n_con), dim + 1):
        a_s = a_all[list(active)]
        try:
            point = np.linalg.solve(a_s, b_all[list(active)])
        except np.linalg.LinAlgError:
            continue
        if not np.all(np.isfinite(point)):
            continue
        if np.any(a_all @ point - b_all < -feas_tol):
            continue
        best = max(best, float(point[-1]))
    return best


def oracle_grid_solve(inst: QpInstance, points_per_axis: int) -> QpSolution:
    """Brute-force reference: best feasible point of a tensor grid over the box.

    Test-only oracle, limited to dim <= 3.
    """
    if inst.dim > 3:
        raise ValueError("grid oracle supports at most 3 decision variables")
    axes = [
        np.linspace(lo, hi, points_per_axis) if hi > lo else np.array([lo])
        for lo, hi in zip(inst.lower, inst.upper)
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([m.reshape(-1) for m in mesh])
    feasible = np.ones(pts.shape[0], dtype=bool)
    for row in inst.rows:
        a, b = row.as_ge()
        feasible &= pts @ a >= b - 1e-12 * max(1.0, abs(b))
    if not np.any(feasible):
        return QpSolution(
            values=np.full(inst.dim, np.nan), objective=math.inf,
            status="infeasible",
        )
    candidates = pts[feasible]
    objectives = (candidates * candidates) @ inst.quadratic_diag \
        + candidates @ inst.linear_cost
    idx = int(np.argmin(objectives))
    return QpSolution(
        values=candidates[idx], objective=float(objectives[idx]),
        status="optimal",
    )
