"""Per-step relaxation update for any integrator.

Given the baseline output ``(t_new, u_new)``, relaxation forms a convex
combination of recent accepted steps as the secant base point, estimates
the functional value at the new time, and solves the scalar relaxation
equation for a parameter gamma near one.  The accepted state and time
are moved along the secant by gamma; the fixed-coefficient variant keeps
the multistep coefficients frozen and advances a pseudotime instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np

from .core import Functional, FunctionalKind, OdeProblem, StepHistory, old_values
from .errors import (
    DegenerateStepError,
    MaxIterError,
    NegativeCoefficientsError,
    NegativeDiscriminantError,
    NoBracketError,
    StepTooLargeError,
)
from .lmm import LmmCoefficients, dense_output
from .rootfind import RootConfig, solve_bracketed, solve_gamma_quadratic

# Lower clamp for the gamma bracket search; steps over the spurious root
# near zero that exists whenever the base point lies on the secant.
_GAMMA_FLOOR = 1e-3

_SQRT3 = math.sqrt(3.0)


class Mode(Enum):
    BASELINE = "baseline"
    RELAXATION = "relaxation"
    IDT = "idt"
    PROJECTION = "projection"


class Estimator(Enum):
    CONSERVE = "conserve"
    METHOD_QUADRATURE = "method_quadrature"
    DENSE_GAUSS = "dense_gauss"


class Adapt(Enum):
    VARIABLE = "variable_coefficients"
    FIXED = "fixed_coefficients"


@dataclass(frozen=True)
class RelaxationConfig:
    mode: Mode = Mode.RELAXATION
    m: int = 1
    nu: tuple[float, ...] = (1.0,)
    estimator: Estimator = Estimator.CONSERVE
    gauss_nodes: int = 2
    adapt: Adapt = Adapt.VARIABLE
    target_fidx: int = 0
    root_cfg: RootConfig = field(default_factory=RootConfig)

    def __post_init__(self):
        nu = np.asarray(self.nu, dtype=float)
        if nu.size != self.m:
            raise ValueError(f"nu has length {nu.size}, expected m={self.m}")
        if np.any(nu < 0.0) or abs(nu.sum() - 1.0) > 1e-12:
            raise ValueError("nu must be a convex combination")
        if self.gauss_nodes not in (1, 2):
            raise ValueError("gauss_nodes must be 1 or 2")


@dataclass
class StepDiagnostics:
    gamma: float
    residual: float
    eta_estimate: float
    bracket_width: float = 0.0
    projection_lambda: float = 0.0


@dataclass
class PseudotimeState:
    """Bookkeeping for fixed-coefficient runs: pseudotime advances uniformly
    while the physical time absorbs the relaxation scaling."""

    tau: float
    t: float
    gamma_scale_max: float = 0.0


def residual_r(gamma: float, u_old, u_new, eta_old: float, eta_new: float,
               eta: Functional) -> float:
    """Relaxation residual along the secant between the old and new states."""
    u_g = u_old + gamma * (u_new - u_old)
    return float(eta.eval(u_g) - eta_old - gamma * (eta_new - eta_old))


def estimate_eta_method(coeffs: LmmCoefficients, history: StepHistory,
                        problem: OdeProblem, fidx: int,
                        new_point=None) -> float:
    """Functional estimate from the step's own coefficients.

    Uses the cached values ``eta_i`` and ``eta'(u_i) . f_i`` at the history
    points; requires all coefficients non-negative so the estimate keeps a
    guaranteed sign for dissipative problems.  ``new_point=(u, f)`` supplies
    the implicit point when ``beta_k != 0``.
    """
    k = coeffs.k
    if float(coeffs.alpha.min()) < -1e-12 or float(coeffs.beta.min()) < -1e-12:
        raise NegativeCoefficientsError(
            "method-based estimate requires non-negative coefficients"
        )
    fn = problem.functionals[fidx]
    entries = history.last_k(k)
    value = 0.0
    for i, e in enumerate(entries):
        if coeffs.alpha[i] != 0.0:
            value += coeffs.alpha[i] * e.eta[fidx]
        if coeffs.beta[i] != 0.0:
            value += coeffs.dt_ref * coeffs.beta[i] * fn.deriv_dot(e.u, e.f)
    if coeffs.beta[k] != 0.0:
        if new_point is None:
            raise ValueError("implicit scheme needs new_point=(u_new, f_new)")
        u_n, f_n = new_point
        value += coeffs.dt_ref * coeffs.beta[k] * fn.deriv_dot(u_n, f_n)
    return float(value)


def estimate_eta_gauss(history: StepHistory, problem: OdeProblem, fidx: int,
                       t_lo: float, t_hi: float, nodes: int, dense) -> float:
    """Functional estimate from Gauss-Legendre quadrature of the rate
    ``eta'(y) . f(y)`` along a dense-output curve over ``[t_lo, t_hi]``.

    Positive weights keep the estimate one-signed for dissipative problems.
    """
    if nodes not in (1, 2):
        raise ValueError("nodes must be 1 or 2")
    base = None
    for i in range(len(history) - 1, -1, -1):
        if history[i].t == t_lo:
            base = history[i].eta[fidx]
            break
    if base is None:
        raise ValueError(f"t_lo={t_lo} is not an accepted step time")
    length = t_hi - t_lo
    mid = 0.5 * (t_lo + t_hi)
    if nodes == 1:
        taus = (mid,)
        weights = (length,)
    else:
        off = length / (2.0 * _SQRT3)
        taus = (mid - off, mid + off)
        weights = (0.5 * length, 0.5 * length)
    fn = problem.functionals[fidx]
    value = float(base)
    for tau, w in zip(taus, weights):
        y = dense(tau)
        value += w * fn.deriv_dot(y, problem.f(tau, y))
    return value


def solve_relaxation_gamma(fn: Functional, u_old, u_new, eta_old: float,
                           eta_new: float, root_cfg: RootConfig):
    """Relaxation parameter for one step; closed form for squared norms,
    bracketed scalar solve otherwise.  Returns ``(gamma, diagnostics)``."""
    d = u_new - u_old
    if not np.any(d):
        return 1.0, StepDiagnostics(gamma=1.0, residual=0.0, eta_estimate=eta_new)
    if fn.kind is FunctionalKind.QUADRATIC_NORM:
        a = float(fn.eval(u_old)) - eta_old
        b = float(fn.deriv_dot(u_old, d)) - (eta_new - eta_old)
        c = float(fn.eval(d))
        gamma = solve_gamma_quadratic(a, b, c)
        width = 0.0
    else:
        def r(g):
            return residual_r(g, u_old, u_new, eta_old, eta_new, fn)

        if abs(r(1.0)) <= root_cfg.abs_tol:
            gamma = 1.0
        else:
            gamma = solve_bracketed(r, 1.0, root_cfg, lo_min=_GAMMA_FLOOR)
        width = root_cfg.abs_tol
    res = residual_r(gamma, u_old, u_new, eta_old, eta_new, fn)
    return gamma, StepDiagnostics(gamma=gamma, residual=res,
                                  eta_estimate=eta_new, bracket_width=width)


def estimate_eta(cfg: RelaxationConfig, history, problem, fidx,
                      eta_old, t_new, u_new, coeffs):
    if cfg.estimator is Estimator.CONSERVE:
        return float(eta_old)
    if coeffs is None:
        raise ValueError("non-trivial estimators need the step coefficients")
    if cfg.estimator is Estimator.METHOD_QUADRATURE:
        new_point = None
        if not coeffs.explicit:
            new_point = (u_new, problem.f(t_new, u_new))
        return estimate_eta_method(coeffs, history, problem, fidx, new_point)
    # dense-output Gauss quadrature
    extra = None
    if not coeffs.explicit:
        extra = (t_new, problem.f(t_new, u_new))

    def dense(tau):
        return dense_output(history, problem, tau, k=coeffs.k, extra=extra,
                            t_max=t_new)

    t_lo = history[len(history) - cfg.m].t
    return estimate_eta_gauss(history, problem, fidx, t_lo, t_new,
                              cfg.gauss_nodes, dense)


def relax_step(step_out, history: StepHistory, problem: OdeProblem,
               cfg: RelaxationConfig, coeffs: Optional[LmmCoefficients] = None,
               step_index: Optional[int] = None):
    """Relax one integrator output and append the accepted state.

    Returns ``(t_gamma, u_gamma, gamma, diagnostics)``.  In IDT mode the
    state is relaxed but the new time is kept.  Root-finding failures
    surface as :class:`StepTooLargeError` carrying the offending step size.
    """
    t_new, u_new = step_out
    fidx = cfg.target_fidx
    fn = problem.functionals[fidx]
    t_old, u_old, eta_old_all = old_values(history, cfg.m, cfg.nu)
    eta_old = float(eta_old_all[fidx])
    eta_new = estimate_eta(cfg, history, problem, fidx, eta_old,
                           t_new, u_new, coeffs)
    dt = t_new - history.last.t
    try:
        gamma, diag = solve_relaxation_gamma(fn, u_old, u_new, eta_old,
                                             eta_new, cfg.root_cfg)
    except (NoBracketError, NegativeDiscriminantError, DegenerateStepError,
            MaxIterError) as exc:
        raise StepTooLargeError(
            f"relaxation solve failed at t={history.last.t} with dt={dt}: {exc}",
            dt=dt, step_index=step_index,
        ) from exc
    if gamma <= _GAMMA_FLOOR:
        raise StepTooLargeError(
            f"relaxation parameter {gamma:.3e} collapsed at dt={dt}",
            dt=dt, step_index=step_index,
        )
    u_g = u_old + gamma * (u_new - u_old)
    if cfg.mode is Mode.IDT:
        t_g = t_new
    else:
        t_g = t_old + gamma * (t_new - t_old)
    history.push_state(problem, t_g, u_g)
    return t_g, u_g, gamma, diag


def pseudotime_step(history: StepHistory, problem: OdeProblem,
                    cfg: RelaxationConfig, coeffs: LmmCoefficients,
                    state: PseudotimeState, dt_tau: float):
    """Fixed-coefficient relaxation step advancing the pseudotime by dt_tau.

    The secant weights equal the state coefficients (``nu = alpha``), so
    the step and the relaxation act on the augmented pair (t, u): the new
    time is the same multistep combination applied to the time component.
    Returns ``(tau, t_gamma, u_gamma, gamma, diagnostics)``.
    """
    k = coeffs.k
    if float(coeffs.alpha.min()) < 0.0:
        raise ValueError("fixed-coefficient relaxation needs alpha >= 0")
    if not coeffs.explicit:
        raise ValueError("fixed-coefficient mode supports explicit schemes only")
    entries = history.last_k(k)
    u_new = np.zeros_like(entries[0].u)
    t_new = 0.0
    for i, e in enumerate(entries):
        if coeffs.alpha[i] != 0.0:
            u_new = u_new + coeffs.alpha[i] * e.u
            t_new += coeffs.alpha[i] * e.t
        if coeffs.beta[i] != 0.0:
            u_new = u_new + dt_tau * coeffs.beta[i] * e.f
            t_new += dt_tau * coeffs.beta[i]
    fidx = cfg.target_fidx
    fn = problem.functionals[fidx]
    nu = tuple(coeffs.alpha)
    t_old, u_old, eta_old_all = old_values(history, k, nu)
    eta_old = float(eta_old_all[fidx])
    sub_cfg = replace(cfg, m=k, nu=nu)
    eta_new = estimate_eta(sub_cfg, history, problem, fidx, eta_old,
                           t_new, u_new, coeffs)
    try:
        gamma, diag = solve_relaxation_gamma(fn, u_old, u_new, eta_old,
                                             eta_new, cfg.root_cfg)
    except (NoBracketError, NegativeDiscriminantError, DegenerateStepError,
            MaxIterError) as exc:
        raise StepTooLargeError(
            f"fixed-coefficient relaxation failed at tau={state.tau}: {exc}",
            dt=dt_tau,
        ) from exc
    u_g = u_old + gamma * (u_new - u_old)
    t_g = t_old + gamma * (t_new - t_old)
    t_prev = history.last.t
    history.push_state(problem, t_g, u_g)
    state.tau += dt_tau
    state.t = t_g
    state.gamma_scale_max = max(state.gamma_scale_max,
                                abs((t_g - t_prev) / dt_tau - 1.0))
    return state.tau, t_g, u_g, gamma, diag
