"""Orthogonal projection post-processing.

Replaces the baseline output by ``u + lambda * Phi`` with ``Phi`` the
functional gradient at the new state, so the functional hits a target
value while the step time stays unchanged.  Used as the comparison
baseline for relaxation: it repairs the target functional but breaks
linear invariants in general.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .core import Functional
from .errors import NewtonDivergedError


class Direction(Enum):
    GRADIENT = "gradient"
    CUSTOM = "custom"


@dataclass(frozen=True)
class ProjectionConfig:
    newton_tol: float = 1e-14
    max_iter: int = 50
    direction: Direction = Direction.GRADIENT
    custom_direction: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.newton_tol <= 0.0:
            raise ValueError("newton_tol must be positive")
        if self.direction is Direction.CUSTOM and self.custom_direction is None:
            raise ValueError("custom direction requires a callable")


def project(u_new: np.ndarray, eta_target: float, eta: Functional,
            cfg: Optional[ProjectionConfig] = None):
    """Scalar Newton for ``lambda`` with the search direction held fixed.

    Returns ``(u_lambda, lambda)`` with ``eta(u_lambda) = eta_target`` to
    the Newton tolerance.
    """
    if cfg is None:
        cfg = ProjectionConfig()
    val = float(eta.eval(u_new)) - eta_target
    if abs(val) <= cfg.newton_tol:
        return u_new, 0.0
    if cfg.direction is Direction.CUSTOM:
        phi = np.asarray(cfg.custom_direction(u_new), dtype=float)
    else:
        phi = eta.gradient(u_new)
    lam = 0.0
    for _ in range(cfg.max_iter):
        u_l = u_new + lam * phi
        val = float(eta.eval(u_l)) - eta_target
        if abs(val) <= cfg.newton_tol:
            return u_l, lam
        slope = float(eta.deriv_dot(u_l, phi))
        if slope == 0.0 or not np.isfinite(slope):
            raise NewtonDivergedError("projection Newton hit a zero or invalid slope")
        lam -= val / slope
        if not np.isfinite(lam):
            raise NewtonDivergedError("projection Newton produced a non-finite step")
    raise NewtonDivergedError(
        f"projection failed to reach tol={cfg.newton_tol} in {cfg.max_iter} iterations"
    )
