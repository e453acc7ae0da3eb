"""Shared domain types for functional-aware time integration.

States are plain 1-D numpy arrays.  An :class:`OdeProblem` bundles a
right-hand side with the scalar functionals whose evolution the
integrators enforce or monitor.  A :class:`StepHistory` caches
``(t, u, f(u), eta(u))`` at accepted steps so multistep methods never
re-evaluate the right-hand side at past points.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import NonFiniteError

Array = np.ndarray


class FunctionalKind(Enum):
    """Structural tag; QUADRATIC_NORM enables the closed-form relaxation solve."""

    QUADRATIC_NORM = "quadratic_norm"
    LINEAR = "linear"
    GENERAL = "general"


class FunctionalGoal(Enum):
    """Expected evolution of the functional along exact solutions."""

    CONSERVE = "conserve"
    DISSIPATE = "dissipate"
    TRACK = "track"


@dataclass(frozen=True)
class Functional:
    """Scalar functional ``eta(u)`` with a directional-derivative callback.

    ``deriv_dot(u, v)`` must return ``eta'(u) . v`` and be linear in ``v``.
    Supplying the derivative as a directional action (rather than a
    gradient vector) keeps matrix-free PDE functionals allocation-free;
    an optional analytic ``grad`` shortcut is used by projection.

    For ``kind=QUADRATIC_NORM`` the functional must be half a squared
    norm of a fixed symmetric positive inner product (possibly carrying
    grid quadrature weights), which admits a closed-form relaxation
    parameter.  ``kind=LINEAR`` marks additive functionals such as the
    total mass of a semidiscretization.
    """

    name: str
    eval: Callable[[Array], float]
    deriv_dot: Callable[[Array, Array], float]
    kind: FunctionalKind = FunctionalKind.GENERAL
    goal: FunctionalGoal = FunctionalGoal.CONSERVE
    grad: Optional[Callable[[Array], Array]] = None

    def gradient(self, u: Array) -> Array:
        """Gradient of eta at u; sampled from deriv_dot if not supplied."""
        if self.grad is not None:
            return np.asarray(self.grad(u), dtype=float)
        n = u.shape[0]
        g = np.empty(n)
        e = np.zeros(n)
        for i in range(n):
            e[i] = 1.0
            g[i] = self.deriv_dot(u, e)
            e[i] = 0.0
        return g


@dataclass(frozen=True)
class OdeProblem:
    """Initial-value problem ``u' = rhs(t, u)``, ``u(0) = u0``.

    ``functionals`` lists every tracked quantity; relaxation targets one
    of them (by index) and the others are only monitored.
    """

    name: str
    dim: int
    rhs: Callable[[float, Array], Array]
    u0: Array
    functionals: tuple[Functional, ...]
    exact_solution: Optional[Callable[[float], Array]] = None
    stiff: bool = False

    def f(self, t: float, u: Array) -> Array:
        """Evaluate the right-hand side, rejecting non-finite output."""
        v = np.asarray(self.rhs(t, u), dtype=float)
        if v.shape != (self.dim,):
            raise ValueError(
                f"rhs of {self.name!r} returned shape {v.shape}, expected ({self.dim},)"
            )
        if not np.all(np.isfinite(v)):
            raise NonFiniteError(f"rhs of {self.name!r} not finite at t={t}")
        return v

    def eta_values(self, u: Array) -> Array:
        """Evaluate all functionals at u."""
        return np.array([fn.eval(u) for fn in self.functionals], dtype=float)


def eta_dot(problem: OdeProblem, fidx: int, t: float, u: Array) -> float:
    """Rate of change ``eta'(u) . f(t, u)`` of functional ``fidx`` along the flow."""
    fn = problem.functionals[fidx]
    return float(fn.deriv_dot(u, problem.f(t, u)))


@dataclass(frozen=True)
class HistoryEntry:
    """One accepted step with cached right-hand side and functional values."""

    t: float
    u: Array
    f: Array
    eta: Array  # one value per problem functional


class StepHistory:
    """Ring buffer of accepted steps with strictly increasing times.

    Single-writer: one integration run owns its history.  The oldest
    entry is evicted first once ``capacity`` is reached.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("history capacity must be at least 1")
        self.capacity = capacity
        self._entries: deque[HistoryEntry] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._entries)

    def __getitem__(self, i: int) -> HistoryEntry:
        return self._entries[i]

    @property
    def last(self) -> HistoryEntry:
        return self._entries[-1]

    def last_k(self, k: int) -> list[HistoryEntry]:
        if k > len(self._entries):
            raise ValueError(f"requested {k} entries, history holds {len(self._entries)}")
        return list(self._entries)[len(self._entries) - k :]

    def times(self) -> Array:
        return np.array([e.t for e in self._entries])

    def append(self, entry: HistoryEntry) -> None:
        if self._entries and entry.t <= self._entries[-1].t:
            raise ValueError(
                f"history times must increase strictly: {entry.t} after {self._entries[-1].t}"
            )
        self._entries.append(entry)

    def push_state(self, problem: OdeProblem, t: float, u: Array, f=None) -> HistoryEntry:
        """Cache f(t,u) and all functional values, then append."""
        u = np.asarray(u, dtype=float)
        if f is None:
            f = problem.f(t, u)
        entry = HistoryEntry(t=float(t), u=u, f=np.asarray(f, dtype=float),
                             eta=problem.eta_values(u))
        self.append(entry)
        return entry

    def copy(self) -> "StepHistory":
        dup = StepHistory(self.capacity)
        for e in self._entries:
            dup._entries.append(e)  # entries are immutable
        return dup


def old_values(history: StepHistory, m: int, nu: Sequence[float]):
    """Convex combination of the last ``m`` accepted steps.

    Returns ``(t_old, u_old, eta_old)`` where ``eta_old`` combines the
    cached functional values; note it is the combination of eta values,
    not eta evaluated at the combined state.
    """
    nu = np.asarray(nu, dtype=float)
    if nu.shape != (m,):
        raise ValueError(f"weight vector has length {nu.size}, expected m={m}")
    if np.any(nu < 0.0) or abs(nu.sum() - 1.0) > 1e-12:
        raise ValueError("weights must be non-negative and sum to one")
    if m > len(history):
        raise ValueError(f"m={m} exceeds history length {len(history)}")
    if m == 1:
        e = history.last
        return e.t, e.u, e.eta.copy()
    entries = history.last_k(m)
    t_old = sum(w * e.t for w, e in zip(nu, entries))
    u_old = sum(w * e.u for w, e in zip(nu, entries))
    eta_old = sum(w * e.eta for w, e in zip(nu, entries))
    return float(t_old), u_old, eta_old
