"""Input-affine system abstraction and the adaptive-cruise-control instance.

The controller stack only ever talks to a :class:`SystemModel`, which bundles
the dynamics ``xdot = f(x) + g(x) u``, the safety output ``h`` together with
its Lie derivatives up to the relative degree ``m``, the input gain
``phi = L_g L_f^(m-1) h`` (the only place the input enters the m-th
derivative of ``h``), CLF terms, and the input box.  The car-following
instance built by :func:`acc_model` is the one concrete model shipped here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

Array = np.ndarray


def make_state(z: float, v: float) -> Array:
    """Build a validated state vector (gap distance [m], ego speed [m/s])."""
    x = np.array([float(z), float(v)], dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError(f"state entries must be finite, got {x}")
    return x


@dataclass(frozen=True)
class AccParams:
    """Longitudinal car-following parameters.

    Units: M [kg]; vp, vd [m/s]; f0 [N]; f1 [N s/m]; f2 [N s^2/m^2];
    lp [m]; g_grav [m/s^2].  ca and cd scale the acceleration/braking
    authority as fractions of g, c3 is the CLF convergence rate and w the
    slack penalty weight in the controller objective.
    """

    M: float = 1650.0
    vp: float = 13.89
    vd: float = 24.0
    f0: float = 0.1
    f1: float = 5.0
    f2: float = 0.25
    lp: float = 10.0
    g_grav: float = 9.81
    ca: float = 0.4
    cd: float = 0.4
    c3: float = 2.0
    w: float = 1.0e5

    def __post_init__(self) -> None:
        positive = (
            ("M", self.M), ("vp", self.vp), ("vd", self.vd), ("lp", self.lp),
            ("g_grav", self.g_grav), ("ca", self.ca), ("cd", self.cd),
            ("c3", self.c3), ("w", self.w),
        )
        for name, value in positive:
            if not (np.isfinite(value) and value > 0.0):
                raise ValueError(f"{name} must be positive, got {value}")
        for name, value in (("f0", self.f0), ("f1", self.f1), ("f2", self.f2)):
            if not (np.isfinite(value) and value >= 0.0):
                raise ValueError(f"{name} must be nonnegative, got {value}")

    @property
    def u_min(self) -> float:
        """Maximum braking force [N]."""
        return -self.cd * self.M * self.g_grav

    @property
    def u_max(self) -> float:
        """Maximum traction force [N]."""
        return self.ca * self.M * self.g_grav


@dataclass(frozen=True)
class SystemModel:
    """Affine system with one safety output of relative degree ``m``.

    ``lie_stack(x)`` returns the m+1 drift terms ``[h, L_f h, ..., L_f^m h]``
    and ``phi(x)`` the input gain row of the m-th derivative, so that

        d^m h / dt^m = L_f^m h(x) + phi(x) @ u.

    ``clf_terms(x)`` returns ``(V, L_f V, L_g V)`` with ``L_g V`` a q-vector.
    The optional ``*_grid`` evaluators take an (N, n) array of states and
    return stacked values; they exist so worst-case bounds over a box can be
    computed without a Python-level loop.  All evaluators are pure functions
    and safe to call concurrently.
    """

    n: int
    q: int
    m: int
    rhs: Callable[[Array, Array], Array]
    lie_stack: Callable[[Array], Array]
    phi: Callable[[Array], Array]
    clf_terms: Callable[[Array], tuple[float, float, Array]]
    u_min: Array
    u_max: Array
    lie_stack_grid: Callable[[Array], Array] | None = None
    phi_grid: Callable[[Array], Array] | None = None

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ValueError(f"relative degree must be >= 1, got {self.m}")
        u_min = np.asarray(self.u_min, dtype=float)
        u_max = np.asarray(self.u_max, dtype=float)
        if u_min.shape != (self.q,) or u_max.shape != (self.q,):
            raise ValueError("input bounds must be q-vectors")
        if not (np.all(np.isfinite(u_min)) and np.all(np.isfinite(u_max))):
            raise ValueError("input bounds must be finite")
        if np.any(u_min > u_max):
            raise ValueError("need u_min <= u_max componentwise")
        object.__setattr__(self, "u_min", u_min)
        object.__setattr__(self, "u_max", u_max)


def resistance_force(v: float, p: AccParams) -> float:
    """Rolling/drag resistance f0*sgn(v) + f1*v + f2*v^2 [N]; sgn(0) = 0."""
    return p.f0 * np.sign(v) + p.f1 * v + p.f2 * v * v


def acc_dynamics_rhs(x: Array, u, p: AccParams) -> Array:
    """Time derivative of (gap, speed) under traction/braking force u [N]."""
    z, v = x
    u_scalar = float(np.asarray(u).reshape(-1)[0])
    return np.array([p.vp - v, (-resistance_force(v, p) + u_scalar) / p.M])


def acc_lie_stack(x: Array, p: AccParams) -> tuple[float, float, float, float]:
    """Safety output h = z - lp and its derivatives along the dynamics.

    Returns (h, L_f h, L_f^2 h, L_g L_f h).  The gap closes at vp - v and
    the input enters at the second derivative through -1/M.
    """
    z, v = x
    return (z - p.lp, p.vp - v, resistance_force(v, p) / p.M, -1.0 / p.M)


def acc_clf_terms(x: Array, p: AccParams, form: str = "quadratic"):
    """Speed-tracking CLF terms (V, L_f V, L_g V).

    The quadratic form V = (v - vd)^2 satisfies the two-sided quadratic
    bounds a CLF requires; the signed linear form V = v - vd is kept as an
    option for comparison runs but does not.
    """
    v = x[1]
    fr = resistance_force(v, p)
    if form == "quadratic":
        err = v - p.vd
        return err * err, -2.0 * err * fr / p.M, 2.0 * err / p.M
    if form == "linear":
        return v - p.vd, -fr / p.M, 1.0 / p.M
    raise ValueError(f"unknown clf form {form!r}")


def acc_model(p: AccParams, clf_form: str = "quadratic") -> SystemModel:
    """Build the car-following :class:`SystemModel` (n=2, q=1, m=2)."""

    def rhs(x: Array, u) -> Array:
        return acc_dynamics_rhs(x, u, p)

    def lie_stack(x: Array) -> Array:
        h, lfh, lf2h, _ = acc_lie_stack(x, p)
        return np.array([h, lfh, lf2h])

    def phi(x: Array) -> Array:
        return np.array([-1.0 / p.M])

    def clf_terms(x: Array):
        V, lfV, lgV = acc_clf_terms(x, p, clf_form)
        return V, lfV, np.array([lgV])

    def lie_stack_grid(points: Array) -> Array:
        z = points[:, 0]
        v = points[:, 1]
        fr = p.f0 * np.sign(v) + p.f1 * v + p.f2 * v * v
        return np.column_stack([z - p.lp, p.vp - v, fr / p.M])

    def phi_grid(points: Array) -> Array:
        return np.full((points.shape[0], 1), -1.0 / p.M)

    return SystemModel(
        n=2,
        q=1,
        m=2,
        rhs=rhs,
        lie_stack=lie_stack,
        phi=phi,
        clf_terms=clf_terms,
        u_min=np.array([p.u_min]),
        u_max=np.array([p.u_max]),
        lie_stack_grid=lie_stack_grid,
        phi_grid=phi_grid,
    )
