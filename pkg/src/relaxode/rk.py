"""Explicit Runge-Kutta methods: starting procedures and one-step
relaxation references.

The stage values double as quadrature nodes for the functional-rate
estimate, so dissipative problems keep a guaranteed sign whenever the
weights are non-negative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FunctionalGoal, OdeProblem
from .errors import NonFiniteError, StepTooLargeError
from .relaxation import Mode, RelaxationConfig, solve_relaxation_gamma

__all__ = ["RkTableau", "ssprk22", "ssprk33", "rk4", "RK_TABLEAUX",
           "rk_step", "rk_eta_estimate", "rk_relax_step"]


@dataclass(frozen=True)
class RkTableau:
    name: str
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    p: int

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        c = np.asarray(self.c, dtype=float)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        s = b.size
        if a.shape != (s, s) or c.size != s:
            raise ValueError("tableau dimensions inconsistent")
        if abs(b.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to one")
        if np.max(np.abs(a.sum(axis=1) - c)) > 1e-12:
            raise ValueError("abscissae must equal the stage row sums")

    @property
    def stages(self) -> int:
        return self.b.size

    @property
    def explicit(self) -> bool:
        return bool(np.all(np.triu(self.a) == 0.0))


def ssprk22() -> RkTableau:
    """Two-stage, second-order SSP method (Heun)."""
    return RkTableau("ssprk22", a=[[0.0, 0.0], [1.0, 0.0]],
                     b=[0.5, 0.5], c=[0.0, 1.0], p=2)


def ssprk33() -> RkTableau:
    """Shu-Osher three-stage, third-order SSP method."""
    return RkTableau("ssprk33",
                     a=[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.25, 0.25, 0.0]],
                     b=[1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
                     c=[0.0, 1.0, 0.5], p=3)


def rk4() -> RkTableau:
    """Classical four-stage, fourth-order method."""
    return RkTableau("rk4",
                     a=[[0.0, 0.0, 0.0, 0.0],
                        [0.5, 0.0, 0.0, 0.0],
                        [0.0, 0.5, 0.0, 0.0],
                        [0.0, 0.0, 1.0, 0.0]],
                     b=[1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
                     c=[0.0, 0.5, 0.5, 1.0], p=4)


RK_TABLEAUX = {"ssprk22": ssprk22, "ssprk33": ssprk33, "rk4": rk4}


def rk_step(tableau: RkTableau, problem: OdeProblem, t: float, u: np.ndarray,
            dt: float):
    """One explicit step; returns ``(u_new, stages)`` with the stage states
    kept for the functional-rate estimate."""
    if not tableau.explicit:
        raise ValueError("only explicit tableaux are supported")
    s = tableau.stages
    stages = []
    fs = []
    for i in range(s):
        y = u.copy()
        for j in range(i):
            if tableau.a[i, j] != 0.0:
                y = y + dt * tableau.a[i, j] * fs[j]
        if not np.all(np.isfinite(y)):
            raise NonFiniteError(f"stage {i} non-finite at t={t}")
        stages.append(y)
        fs.append(problem.f(t + tableau.c[i] * dt, y))
    u_new = u.copy()
    for i in range(s):
        u_new = u_new + dt * tableau.b[i] * fs[i]
    if not np.all(np.isfinite(u_new)):
        raise NonFiniteError(f"step output non-finite at t={t}")
    return u_new, stages


def rk_eta_estimate(tableau: RkTableau, problem: OdeProblem, fidx: int,
                    t: float, u: np.ndarray, stages, dt: float) -> float:
    """Functional estimate from the method's own stage quadrature."""
    fn = problem.functionals[fidx]
    value = float(fn.eval(u))
    for i, y in enumerate(stages):
        ci = tableau.c[i]
        value += dt * tableau.b[i] * fn.deriv_dot(y, problem.f(t + ci * dt, y))
    return value


def rk_relax_step(tableau: RkTableau, problem: OdeProblem, fidx: int,
                  t: float, u: np.ndarray, dt: float,
                  cfg: RelaxationConfig):
    """One relaxed explicit step with the previous state as base point.

    Returns ``(t_gamma, u_gamma, gamma)``; in IDT mode the new time is not
    adapted.
    """
    if tableau.p < 2:
        raise ValueError("relaxation needs a baseline of order at least 2")
    fn = problem.functionals[fidx]
    u_new, stages = rk_step(tableau, problem, t, u, dt)
    eta_old = float(fn.eval(u))
    if fn.goal is FunctionalGoal.CONSERVE:
        eta_new = eta_old
    else:
        eta_new = rk_eta_estimate(tableau, problem, fidx, t, u, stages, dt)
    try:
        gamma, _ = solve_relaxation_gamma(fn, u, u_new, eta_old, eta_new,
                                          cfg.root_cfg)
    except Exception as exc:
        raise StepTooLargeError(
            f"RK relaxation failed at t={t} with dt={dt}: {exc}", dt=dt
        ) from exc
    u_g = u + gamma * (u_new - u)
    t_g = t + dt if cfg.mode is Mode.IDT else t + gamma * dt
    return t_g, u_g, gamma
