"""Linear multistep methods on variable step grids.

A scheme is a nonzero-coefficient pattern plus an order; coefficients
for a given step grid come from solving the order conditions

    C_0 = sum_j alpha_j - 1 = 0,
    C_l = sum_j (Omega_j**l alpha_j + l Omega_j**(l-1) beta_j) - Omega_k**l = 0

for l = 1..p, where Omega_j are the step times normalized by the nominal
step.  Extrapolated BDF methods are the one family not determined by a
square pattern solve; they are generated directly from their defining
derivative collocation and checked against the same residuals.

Dense output integrates the interpolating polynomial of the cached
right-hand-side values, anchored at the most recent step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import polynomial as P

from .core import OdeProblem, StepHistory
from .errors import NewtonDivergedError, NonFiniteError, SingularSystemError

_RESIDUAL_TOL = 1e-11


@dataclass(frozen=True)
class LmmScheme:
    """Step count, order, and nonzero-coefficient pattern of one family member.

    ``alpha_idx`` indexes previous states (0 = oldest, k-1 = most recent)
    and ``beta_idx`` indexes derivative values (k = the new, implicit
    point).  ``generator``, when given, replaces the pattern solve.
    """

    name: str
    k: int
    p: int
    alpha_idx: tuple[int, ...]
    beta_idx: tuple[int, ...]
    generator: Optional[Callable[["StepGrid"], "LmmCoefficients"]] = None

    def __post_init__(self):
        if not all(0 <= i < self.k for i in self.alpha_idx):
            raise ValueError(f"alpha indices out of range for k={self.k}")
        if not all(0 <= i <= self.k for i in self.beta_idx):
            raise ValueError(f"beta indices out of range for k={self.k}")
        n_unknowns = len(self.alpha_idx) + len(self.beta_idx)
        if n_unknowns < self.p + 1:
            raise ValueError(
                f"{self.name}: pattern has {n_unknowns} unknowns, "
                f"fewer than p+1={self.p + 1}"
            )
        if self.generator is None and n_unknowns != self.p + 1:
            raise ValueError(
                f"{self.name}: pattern solve needs exactly p+1 unknowns"
            )

    @property
    def explicit(self) -> bool:
        return self.k not in self.beta_idx


@dataclass(frozen=True)
class StepGrid:
    """Normalized step points Omega_0..Omega_k with Omega_0 = 0."""

    omega: np.ndarray
    dt_ref: float

    def __post_init__(self):
        om = np.asarray(self.omega, dtype=float)
        object.__setattr__(self, "omega", om)
        if om[0] != 0.0:
            raise ValueError("grid must start at Omega_0 = 0")
        if np.any(np.diff(om) <= 0.0):
            raise ValueError("grid points must increase strictly")
        if self.dt_ref <= 0.0:
            raise ValueError("dt_ref must be positive")

    @property
    def k(self) -> int:
        return self.omega.size - 1


def order_residuals(alpha: np.ndarray, beta: np.ndarray, omega: np.ndarray,
                    p: int) -> np.ndarray:
    """Order-condition residuals C_0..C_p for dense coefficient arrays."""
    k = omega.size - 1
    res = np.empty(p + 1)
    res[0] = alpha.sum() - 1.0
    for ell in range(1, p + 1):
        acc = float(np.dot(alpha, omega[:k] ** ell))
        acc += ell * float(np.dot(beta, omega ** (ell - 1)))
        res[ell] = acc - omega[k] ** ell
    return res


@dataclass(frozen=True)
class LmmCoefficients:
    """Dense coefficient arrays for one step, validated against the order conditions."""

    alpha: np.ndarray  # length k, index 0 = oldest state
    beta: np.ndarray   # length k+1, index k = new (implicit) point
    omega: np.ndarray
    dt_ref: float
    p: int

    def __post_init__(self):
        res = order_residuals(self.alpha, self.beta, self.omega, self.p)
        worst = float(np.max(np.abs(res)))
        if not np.isfinite(worst) or worst > _RESIDUAL_TOL:
            raise SingularSystemError(
                f"order-condition residual {worst:.3e} exceeds {_RESIDUAL_TOL:.1e} "
                f"(degenerate step grid?)"
            )

    @property
    def k(self) -> int:
        return self.alpha.size

    @property
    def explicit(self) -> bool:
        return self.beta[self.k] == 0.0

    def residuals(self) -> np.ndarray:
        return order_residuals(self.alpha, self.beta, self.omega, self.p)


def make_grid(history: StepHistory, k: int, t_new: float, dt_ref: float) -> StepGrid:
    """Normalized grid from the last k accepted times plus the target time."""
    entries = history.last_k(k)
    t0 = entries[0].t
    if t_new <= entries[-1].t:
        raise ValueError(f"t_new={t_new} must exceed the last history time")
    om = np.array([(e.t - t0) / dt_ref for e in entries] + [(t_new - t0) / dt_ref])
    om[0] = 0.0
    return StepGrid(omega=om, dt_ref=dt_ref)


def solve_order_conditions(scheme: LmmScheme, grid: StepGrid,
                           p: Optional[int] = None) -> LmmCoefficients:
    """Coefficients with C_0..C_p = 0 on the grid, via the pattern solve.

    Dispatches to the scheme generator when one is attached (eBDF).
    """
    if scheme.generator is not None:
        return scheme.generator(grid)
    if p is None:
        p = scheme.p
    if grid.k != scheme.k:
        raise ValueError(f"grid has k={grid.k}, scheme {scheme.name} has k={scheme.k}")
    om = grid.omega
    na = len(scheme.alpha_idx)
    n = na + len(scheme.beta_idx)
    if n != p + 1:
        raise ValueError("pattern size must equal p+1 for the pattern solve")
    A = np.zeros((p + 1, n))
    rhs = np.empty(p + 1)
    for ell in range(p + 1):
        for col, j in enumerate(scheme.alpha_idx):
            A[ell, col] = om[j] ** ell
        if ell >= 1:
            for col, j in enumerate(scheme.beta_idx):
                A[ell, na + col] = ell * om[j] ** (ell - 1)
        rhs[ell] = om[scheme.k] ** ell
    try:
        x = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(
            f"order conditions singular for {scheme.name} on grid {om}"
        ) from exc
    alpha = np.zeros(scheme.k)
    beta = np.zeros(scheme.k + 1)
    alpha[list(scheme.alpha_idx)] = x[:na]
    beta[list(scheme.beta_idx)] = x[na:]
    return LmmCoefficients(alpha=alpha, beta=beta, omega=om.copy(),
                           dt_ref=grid.dt_ref, p=p)


def _lagrange_derivative_weights(nodes: np.ndarray, x: float) -> np.ndarray:
    """Derivatives of the Lagrange basis polynomials at x."""
    n = nodes.size
    w = np.empty(n)
    for i in range(n):
        denom = np.prod([nodes[i] - nodes[j] for j in range(n) if j != i])
        acc = 0.0
        for m in range(n):
            if m == i:
                continue
            term = 1.0
            for j in range(n):
                if j != i and j != m:
                    term *= x - nodes[j]
            acc += term
        w[i] = acc / denom
    return w


def _lagrange_weights(nodes: np.ndarray, x: float) -> np.ndarray:
    """Values of the Lagrange basis polynomials at x."""
    n = nodes.size
    w = np.empty(n)
    for i in range(n):
        num = np.prod([x - nodes[j] for j in range(n) if j != i])
        den = np.prod([nodes[i] - nodes[j] for j in range(n) if j != i])
        w[i] = num / den
    return w


def _ebdf_generator(k: int, p: int):
    """Extrapolated BDF: collocate the derivative of the state interpolant
    at the new time against the extrapolated derivative interpolant."""

    def gen(grid: StepGrid) -> LmmCoefficients:
        om = grid.omega
        if om.size != k + 1:
            raise ValueError(f"grid has k={om.size - 1}, expected {k}")
        d = _lagrange_derivative_weights(om, om[k])
        e = _lagrange_weights(om[:k], om[k])
        alpha = -d[:k] / d[k]
        beta = np.zeros(k + 1)
        beta[:k] = e / d[k]
        return LmmCoefficients(alpha=alpha, beta=beta, omega=om.copy(),
                               dt_ref=grid.dt_ref, p=p)

    return gen


def adams_scheme(k: int) -> LmmScheme:
    """k-step Adams-Bashforth: order k, explicit."""
    return LmmScheme(name=f"adams{k}", k=k, p=k,
                     alpha_idx=(k - 1,), beta_idx=tuple(range(k)))


def nystrom_scheme(k: int) -> LmmScheme:
    """k-step Nystrom (two-step anchor): order k, explicit."""
    if k < 2:
        raise ValueError("Nystrom methods need k >= 2")
    return LmmScheme(name=f"nystrom{k}", k=k, p=k,
                     alpha_idx=(k - 2,), beta_idx=tuple(range(k)))


def ebdf_scheme(k: int) -> LmmScheme:
    """k-step extrapolated BDF: order k, explicit, dense alpha and beta."""
    return LmmScheme(name=f"ebdf{k}", k=k, p=k,
                     alpha_idx=tuple(range(k)), beta_idx=tuple(range(k)),
                     generator=_ebdf_generator(k, k))


def bdf_scheme(k: int) -> LmmScheme:
    """k-step BDF: order k, implicit."""
    return LmmScheme(name=f"bdf{k}", k=k, p=k,
                     alpha_idx=tuple(range(k)), beta_idx=(k,))


def ssp32_scheme() -> LmmScheme:
    """Three-step, second-order SSP method (non-negative coefficients)."""
    return LmmScheme(name="ssp32", k=3, p=2, alpha_idx=(0, 2), beta_idx=(2,))


def ssp43_scheme() -> LmmScheme:
    """Four-step, third-order SSP method (non-negative coefficients)."""
    return LmmScheme(name="ssp43", k=4, p=3, alpha_idx=(0, 3), beta_idx=(0, 3))


@dataclass(frozen=True)
class NewtonConfig:
    tol: float = 1e-12
    max_iter: int = 50
    reuse_jacobian: bool = False


def lmm_step_explicit(coeffs: LmmCoefficients, history: StepHistory,
                      problem: OdeProblem):
    """One explicit step; returns ``(t_new, u_new)`` from cached history values."""
    k = coeffs.k
    if not coeffs.explicit:
        raise ValueError("explicit step requires beta_k = 0")
    entries = history.last_k(k)
    t0 = entries[0].t
    t_new = t0 + coeffs.omega[k] * coeffs.dt_ref
    u_new = np.zeros_like(entries[0].u)
    for i, e in enumerate(entries):
        if coeffs.alpha[i] != 0.0:
            u_new = u_new + coeffs.alpha[i] * e.u
        if coeffs.beta[i] != 0.0:
            u_new = u_new + coeffs.dt_ref * coeffs.beta[i] * e.f
    if not np.all(np.isfinite(u_new)):
        raise NonFiniteError(f"explicit step produced non-finite state at t={t_new}")
    return t_new, u_new


def lmm_step_implicit(coeffs: LmmCoefficients, history: StepHistory,
                      problem: OdeProblem, newton_cfg: Optional[NewtonConfig] = None):
    """One implicit step solved by Newton with a finite-difference Jacobian.

    Converged when the max norm of ``G(u) = u - dt*beta_k*f(t,u) - explicit part``
    drops below the Newton tolerance.
    """
    if newton_cfg is None:
        newton_cfg = NewtonConfig()
    k = coeffs.k
    if coeffs.beta[k] == 0.0:
        raise ValueError("implicit step requires beta_k != 0")
    entries = history.last_k(k)
    t0 = entries[0].t
    t_new = t0 + coeffs.omega[k] * coeffs.dt_ref
    g = np.zeros_like(entries[0].u)
    for i, e in enumerate(entries):
        if coeffs.alpha[i] != 0.0:
            g = g + coeffs.alpha[i] * e.u
        if coeffs.beta[i] != 0.0:
            g = g + coeffs.dt_ref * coeffs.beta[i] * e.f
    bk = coeffs.dt_ref * coeffs.beta[k]
    d = g.size
    sqrt_eps = np.sqrt(np.finfo(float).eps)
    v = g.copy()
    jac = None
    for _ in range(newton_cfg.max_iter):
        fv = problem.f(t_new, v)
        G = v - bk * fv - g
        if float(np.max(np.abs(G))) <= newton_cfg.tol:
            return t_new, v
        if jac is None or not newton_cfg.reuse_jacobian:
            J = np.eye(d)
            for j in range(d):
                h = sqrt_eps * (1.0 + abs(v[j]))
                vp = v.copy()
                vp[j] += h
                J[:, j] -= bk * (problem.f(t_new, vp) - fv) / h
            jac = J
        try:
            delta = np.linalg.solve(jac, G)
        except np.linalg.LinAlgError as exc:
            raise NewtonDivergedError(f"singular Newton matrix at t={t_new}") from exc
        v = v - delta
        if not np.all(np.isfinite(v)):
            raise NewtonDivergedError(f"Newton iterate non-finite at t={t_new}")
    raise NewtonDivergedError(
        f"Newton failed to reach tol={newton_cfg.tol} in "
        f"{newton_cfg.max_iter} iterations at t={t_new}"
    )


def dense_output(history: StepHistory, problem: OdeProblem, tau: float,
                 k: Optional[int] = None, extra=None,
                 t_max: Optional[float] = None) -> np.ndarray:
    """Continuous state approximation over the recent steps.

    Integrates the polynomial through the last ``k`` cached ``(t, f)``
    pairs (optionally extended by ``extra=(t, f)`` for the new implicit
    point), anchored at the most recent state; exact antiderivative of
    the interpolant, no quadrature.  For explicit schemes the interpolant
    legitimately extrapolates past the last node up to the new step time;
    pass that time as ``t_max`` to widen the admissible range.
    """
    if k is None:
        k = len(history)
    entries = history.last_k(min(k, len(history)))
    ts = [e.t for e in entries]
    fs = [e.f for e in entries]
    if extra is not None:
        ts.append(float(extra[0]))
        fs.append(np.asarray(extra[1], dtype=float))
    anchor = history.last
    t_lo, t_hi = min(ts), max(ts)
    if t_max is not None:
        t_hi = max(t_hi, t_max)
    span = t_hi - t_lo if t_hi > t_lo else 1.0
    if tau < t_lo - 1e-9 * span or tau > t_hi + 1e-9 * span:
        raise ValueError(
            f"tau={tau} outside the dense-output range [{t_lo}, {t_hi}]"
        )
    scale = span / max(1, len(ts) - 1)
    s_nodes = (np.asarray(ts) - anchor.t) / scale
    s_tau = (tau - anchor.t) / scale
    u = anchor.u.astype(float).copy()
    for i, fi in enumerate(fs):
        others = np.delete(s_nodes, i)
        c = P.polyfromroots(others)
        denom = np.prod(s_nodes[i] - others) if others.size else 1.0
        C = P.polyint(c / denom)
        w = P.polyval(s_tau, C) - P.polyval(0.0, C)
        u = u + scale * w * fi
    return u
