"""Scalar equation solving for the relaxation and projection parameters.

The general path expands a bracket around a center value until the
residual changes sign and then polishes the root with Brent's method
(scipy).  Squared-norm functionals bypass this entirely through the
closed-form quadratic solve.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .errors import (
    DegenerateStepError,
    MaxIterError,
    NegativeDiscriminantError,
    NoBracketError,
)

_MAX_EXPANSIONS = 48
_DEGENERATE_C = 1e-300


@dataclass(frozen=True)
class RootConfig:
    abs_tol: float = 1e-14
    max_iter: int = 200
    bracket_expansion: float = 2.0
    initial_halfwidth: float = 0.5

    def __post_init__(self):
        if self.abs_tol <= 0.0:
            raise ValueError("abs_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


def _safe_eval(r: Callable[[float], float], x: float) -> float:
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return float(r(x))


def solve_bracketed(
    r: Callable[[float], float],
    center: float,
    cfg: Optional[RootConfig] = None,
    lo_min: Optional[float] = None,
) -> float:
    """Root of ``r`` inside the first sign-changing bracket around ``center``.

    The bracket starts at ``center +- initial_halfwidth`` and both ends
    grow geometrically until a sign change appears; the segment closest
    to the center wins (left side preferred on ties, which for the
    relaxation parameter errs towards added dissipation).  ``lo_min``
    clamps the lower end, used to step over a known spurious root near
    zero.  Termination: ``|r(x)| <= abs_tol`` or bracket width ``<= abs_tol``.
    """
    if cfg is None:
        cfg = RootConfig()
    rc = _safe_eval(r, center)
    if abs(rc) <= cfg.abs_tol:
        return float(center)

    def usable(v):
        return not np.isnan(v)

    def polish(a, b):
        try:
            x, res = brentq(
                lambda s: _safe_eval(r, s), a, b,
                xtol=cfg.abs_tol, rtol=4.0 * np.finfo(float).eps,
                maxiter=cfg.max_iter, full_output=True, disp=False,
            )
        except ValueError as exc:  # endpoints lost their sign change (NaN etc.)
            raise NoBracketError(f"bracket [{a}, {b}] unusable: {exc}") from exc
        if not res.converged:
            raise MaxIterError(
                f"root iteration exceeded {cfg.max_iter} iterations on [{a}, {b}]"
            )
        return float(x)

    prev_lo, prev_hi = center, center
    r_prev_lo, r_prev_hi = rc, rc
    w = cfg.initial_halfwidth
    for _ in range(_MAX_EXPANSIONS):
        lo = center - w
        if lo_min is not None:
            lo = max(lo, lo_min)
        hi = center + w
        segments = []
        if lo < prev_lo:
            r_lo = _safe_eval(r, lo)
            segments.append((lo, prev_lo, r_lo, r_prev_lo, "left"))
        else:
            r_lo = r_prev_lo
        r_hi = _safe_eval(r, hi)
        segments.append((prev_hi, hi, r_prev_hi, r_hi, "right"))
        for a, b, ra, rb, side in segments:
            if not (usable(ra) and usable(rb)):
                continue
            if ra == 0.0:
                return float(a)
            if rb == 0.0:
                return float(b)
            if ra * rb < 0.0:
                return polish(a, b)
        prev_lo, r_prev_lo = lo, r_lo
        prev_hi, r_prev_hi = hi, r_hi
        w *= cfg.bracket_expansion
    raise NoBracketError(
        f"no sign change within expansion budget around {center} "
        "(step size too large?)"
    )


def solve_gamma_quadratic(a: float, b: float, c: float) -> float:
    """Non-negative root of ``c*g**2 + b*g + a = 0`` for squared-norm functionals.

    Coefficients follow the secant-line geometry of the relaxation update:
    ``a = eta(u_old) - eta_old <= 0`` and ``c = eta(u_new - u_old) >= 0``.
    The returned branch is continuous in ``a`` at ``a -> 0`` (so ``a = 0``
    yields ``-b/c``) and is evaluated in the conjugate form when ``b > 0``
    to avoid cancellation.
    """
    if c <= _DEGENERATE_C:
        raise DegenerateStepError(
            "quadratic coefficient c is (numerically) zero: new state equals old state"
        )
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        raise NegativeDiscriminantError(
            "no real relaxation parameter (step size too large?)"
        )
    sq = np.sqrt(disc)
    if b <= 0.0:
        gamma = (-b + sq) / (2.0 * c)
    else:
        gamma = (2.0 * a) / (-b - sq)
    if gamma < 1e-8:
        warnings.warn(
            f"relaxation parameter collapsed to {gamma:.3e}",
            RuntimeWarning,
            stacklevel=2,
        )
    return float(gamma)
