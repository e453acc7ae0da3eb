"""Test-problem suite: small ODEs with analytic solutions and 1-D
method-of-lines semidiscretizations, each exposing its functionals.

The relaxation target defaults to the first registered functional, so
the "primary" quantity (energy, Hamiltonian, entropy) always comes
first and linear invariants such as the total mass follow as monitored
functionals.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .core import Functional, FunctionalGoal, FunctionalKind, OdeProblem


def _quadratic_norm_functional(name, weights=None, goal=FunctionalGoal.CONSERVE):
    """eta(u) = 0.5 * sum_i w_i u_i**2 with its exact directional derivative."""
    if weights is None:
        return Functional(
            name=name,
            eval=lambda u: 0.5 * float(np.dot(u, u)),
            deriv_dot=lambda u, v: float(np.dot(u, v)),
            kind=FunctionalKind.QUADRATIC_NORM,
            goal=goal,
            grad=lambda u: u.copy(),
        )
    w = np.asarray(weights, dtype=float)
    return Functional(
        name=name,
        eval=lambda u: 0.5 * float(np.dot(w * u, u)),
        deriv_dot=lambda u, v: float(np.dot(w * u, v)),
        kind=FunctionalKind.QUADRATIC_NORM,
        goal=goal,
        grad=lambda u: w * u,
    )


def _linear_functional(name, weights, goal=FunctionalGoal.CONSERVE):
    w = np.asarray(weights, dtype=float)
    return Functional(
        name=name,
        eval=lambda u: float(np.dot(w, u)),
        deriv_dot=lambda u, v: float(np.dot(w, v)),
        kind=FunctionalKind.LINEAR,
        goal=goal,
        grad=lambda u: w.copy(),
    )


def nonlinear_oscillator() -> OdeProblem:
    """Unit-speed rotation with state-dependent rate; conserves 0.5*|u|^2.

    Exact solution (cos t, sin t) from u0 = (1, 0).
    """

    def rhs(t, u):
        n2 = float(np.dot(u, u))
        if n2 == 0.0:
            raise ValueError("oscillator right-hand side singular at u = 0")
        return np.array([-u[1], u[0]]) / n2

    return OdeProblem(
        name="oscillator",
        dim=2,
        rhs=rhs,
        u0=np.array([1.0, 0.0]),
        functionals=(_quadratic_norm_functional("energy"),),
        exact_solution=lambda t: np.array([math.cos(t), math.sin(t)]),
    )


def _kepler_exact_factory(e):
    """Closed-form unit-period orbit started at perihelion on the positive
    x-axis; eccentric anomaly from Newton on Kepler's equation."""
    root = math.sqrt(1.0 - e * e)

    def exact(t):
        E = t % (2.0 * math.pi)
        mean = E
        for _ in range(60):
            delta = (E - e * math.sin(E) - mean) / (1.0 - e * math.cos(E))
            E -= delta
            if abs(delta) < 1e-15:
                break
        q = np.array([math.cos(E) - e, root * math.sin(E)])
        edot = 1.0 / (1.0 - e * math.cos(E))
        p = np.array([-math.sin(E) * edot, root * math.cos(E) * edot])
        return np.concatenate([q, p])

    return exact


def kepler(e: float = 0.5) -> OdeProblem:
    """Planar two-body problem with eccentricity parameter e.

    State (q1, q2, p1, p2); the Hamiltonian H = 0.5*|p|^2 - 1/|q| drives
    relaxation by default, the angular momentum L is monitored.
    """

    def rhs(t, u):
        q, p = u[:2], u[2:]
        r = float(np.hypot(q[0], q[1]))
        if r == 0.0:
            raise ValueError("Kepler right-hand side singular at |q| = 0")
        return np.concatenate([p, -q / r ** 3])

    def h_eval(u):
        q, p = u[:2], u[2:]
        return 0.5 * float(np.dot(p, p)) - 1.0 / float(np.hypot(q[0], q[1]))

    def h_deriv(u, v):
        q, p = u[:2], u[2:]
        vq, vp = v[:2], v[2:]
        r3 = float(np.hypot(q[0], q[1])) ** 3
        return float(np.dot(q, vq)) / r3 + float(np.dot(p, vp))

    def h_grad(u):
        q, p = u[:2], u[2:]
        r3 = float(np.hypot(q[0], q[1])) ** 3
        return np.concatenate([q / r3, p])

    hamiltonian = Functional("hamiltonian", eval=h_eval, deriv_dot=h_deriv,
                             kind=FunctionalKind.GENERAL,
                             goal=FunctionalGoal.CONSERVE, grad=h_grad)

    def l_eval(u):
        return float(u[0] * u[3] - u[1] * u[2])

    def l_deriv(u, v):
        return float(v[0] * u[3] + u[0] * v[3] - v[1] * u[2] - u[1] * v[2])

    angular = Functional("angular_momentum", eval=l_eval, deriv_dot=l_deriv,
                         kind=FunctionalKind.GENERAL,
                         goal=FunctionalGoal.CONSERVE,
                         grad=lambda u: np.array([u[3], -u[2], -u[1], u[0]]))

    # perihelion start of the unit-period orbit with eccentricity e
    q0 = np.array([1.0 - e, 0.0])
    p0 = np.array([0.0, math.sqrt((1.0 + e) / (1.0 - e))])
    return OdeProblem(
        name="kepler",
        dim=4,
        rhs=rhs,
        u0=np.concatenate([q0, p0]),
        functionals=(hamiltonian, angular),
        exact_solution=_kepler_exact_factory(e),
    )


def exp_entropy() -> OdeProblem:
    """Scalar decay u' = -exp(u) with dissipated entropy exp(u).

    Exact solution -log(exp(-1/2) + t) from u0 = 0.5.
    """

    def rhs(t, u):
        return -np.exp(u)

    fn = Functional(
        name="exp_entropy",
        eval=lambda u: float(np.exp(u[0])),
        deriv_dot=lambda u, v: float(np.exp(u[0]) * v[0]),
        kind=FunctionalKind.GENERAL,
        goal=FunctionalGoal.DISSIPATE,
        grad=lambda u: np.exp(u),
    )
    return OdeProblem(
        name="exp_entropy",
        dim=1,
        rhs=rhs,
        u0=np.array([0.5]),
        functionals=(fn,),
        exact_solution=lambda t: np.array([-math.log(math.exp(-0.5) + t)]),
    )


def conserved_exponential(u0: Optional[np.ndarray] = None) -> OdeProblem:
    """Coupled exponential system conserving exp(u1) + exp(u2).

    The difference w = u2 - u1 grows exactly linearly in time, which is
    what makes relaxed multistep solutions land on the exact trajectory.
    """
    if u0 is None:
        u0 = np.array([0.0, 0.0])
    u0 = np.asarray(u0, dtype=float)
    eta0 = float(np.exp(u0).sum())
    c0 = math.exp(u0[0] - u0[1])

    def rhs(t, u):
        return np.array([-math.exp(u[1]), math.exp(u[0])])

    fn = Functional(
        name="exp_sum",
        eval=lambda u: float(np.exp(u).sum()),
        deriv_dot=lambda u, v: float(np.dot(np.exp(u), v)),
        kind=FunctionalKind.GENERAL,
        goal=FunctionalGoal.CONSERVE,
        grad=lambda u: np.exp(u),
    )

    def exact(t):
        grow = math.exp(eta0 * t)
        return np.array([
            math.log(c0 * eta0 / (c0 + grow)),
            math.log(eta0 * grow / (c0 + grow)),
        ])

    return OdeProblem(
        name="conserved_exponential",
        dim=2,
        rhs=rhs,
        u0=u0,
        functionals=(fn,),
        exact_solution=exact,
    )


_SKEW3 = np.array([[0.0, -1.0, 1.0], [1.0, 0.0, -1.0], [-1.0, 1.0, 0.0]])


def skew3() -> OdeProblem:
    """3x3 skew-symmetric linear system; energy and total mass both constant.

    The classic counterexample state: orthogonal projection onto the
    energy level set changes the mass, relaxation does not.
    """

    def rhs(t, u):
        return _SKEW3 @ u

    return OdeProblem(
        name="skew3",
        dim=3,
        rhs=rhs,
        u0=np.array([-1.0, 0.0, 0.0]),
        functionals=(
            _quadratic_norm_functional("energy"),
            _linear_functional("mass", np.ones(3)),
        ),
    )


def burgers_fd(N: int = 64, eps: float = 0.05, flux: str = "split") -> OdeProblem:
    """Periodic finite-volume Burgers semidiscretization on [-1, 1].

    The split-form flux dissipates the discrete energy for eps >= 0 (and
    conserves it exactly at eps = 0); the central variant has no such
    guarantee.  Mass is conserved by telescoping either way.
    """
    if N < 4:
        raise ValueError("Burgers grid needs N >= 4")
    if flux not in ("split", "central"):
        raise ValueError(f"unknown flux {flux!r}")
    dx = 2.0 / N
    x = -1.0 + dx * np.arange(N)

    if flux == "split":
        def fnum(um, up):
            return (um * um + um * up + up * up) / 6.0 - eps * (up - um)
    else:
        def fnum(um, up):
            return (um * um + up * up) / 4.0 - eps * (up - um)

    def rhs(t, u):
        up = np.roll(u, -1)
        fluxes = fnum(u, up)  # interface i+1/2
        return -(fluxes - np.roll(fluxes, 1)) / dx

    return OdeProblem(
        name="burgers",
        dim=N,
        rhs=rhs,
        u0=np.exp(-30.0 * x * x),
        functionals=(
            _quadratic_norm_functional("energy", weights=np.full(N, dx),
                                       goal=FunctionalGoal.DISSIPATE),
            _linear_functional("mass", np.full(N, dx)),
        ),
    )


def _fourier_diff_matrix(N: int, L: float, order: int) -> np.ndarray:
    """Dense real Fourier differentiation matrix of odd order for even N.

    Built by summing the resolved modes directly with the Nyquist mode
    dropped, which keeps the matrices exactly skew-symmetric; the cube of
    the first-derivative matrix would not be.
    """
    if N % 2:
        raise ValueError("Fourier differentiation matrix needs even N")
    if order % 2 == 0:
        raise ValueError("only odd derivative orders are supported")
    x = L / N * np.arange(N)
    theta = x[:, None] - x[None, :]
    sign = (-1.0) ** ((order + 1) // 2)
    D = np.zeros((N, N))
    for m in range(1, N // 2):
        kap = 2.0 * math.pi * m / L
        D += sign * (2.0 / N) * kap ** order * np.sin(kap * theta)
    return D


def kdv_soliton(A: float, L: float, mu: Optional[float] = None):
    """Traveling sech^2 soliton of the KdV equation, periodically wrapped."""
    if mu is None:
        mu = L / 2.0
    c = A / 3.0
    width = math.sqrt(3.0 * A) / 6.0

    def wave(t, x):
        xi = np.mod(x - c * t - mu + L / 2.0, L) - L / 2.0
        return A / np.cosh(width * xi) ** 2

    return wave


def kdv_fourier(N: int = 64, L: float = 80.0, A: float = 2.0) -> OdeProblem:
    """Fourier collocation semidiscretization of the KdV equation.

    The split form -(D(u^2) + U D u)/3 - D3 u with skew-symmetric spectral
    matrices conserves both the discrete mass and energy exactly; the exact
    soliton provides the error reference.
    """
    if N % 2:
        raise ValueError("KdV Fourier discretization needs even N")
    D = _fourier_diff_matrix(N, L, 1)
    D3 = _fourier_diff_matrix(N, L, 3)
    x = L / N * np.arange(N)
    wave = kdv_soliton(A, L)
    dx = L / N

    def rhs(t, u):
        du = D @ u
        return -(D @ (u * u) + u * du) / 3.0 - D3 @ u

    return OdeProblem(
        name="kdv",
        dim=N,
        rhs=rhs,
        u0=wave(0.0, x),
        functionals=(
            _quadratic_norm_functional("energy", weights=np.full(N, dx)),
            _linear_functional("mass", np.full(N, dx)),
        ),
        exact_solution=lambda t: wave(t, x),
        stiff=True,
    )


def advection_sbp(N: int = 200, sat_strength: float = 1.0) -> OdeProblem:
    """Linear advection on [0, 3] with weak sine inflow at the left boundary.

    Second-order summation-by-parts operator with a simultaneous
    approximation term; the energy 0.5*u^T H u is neither conserved nor
    dissipated (it tracks the inflow), so the functional goal is TRACK.
    """
    if N < 3:
        raise ValueError("advection grid needs N >= 3")
    dx = 3.0 / (N - 1)
    h = np.full(N, dx)
    h[0] = h[-1] = 0.5 * dx
    Q = np.zeros((N, N))
    for i in range(N - 1):
        Q[i, i + 1] = 0.5
        Q[i + 1, i] = -0.5
    Q[0, 0] = -0.5
    Q[-1, -1] = 0.5
    Dmat = Q / h[:, None]
    pen = sat_strength / h[0]

    def g(t):
        return math.sin(math.pi * t)

    def rhs(t, u):
        out = -(Dmat @ u)
        out[0] -= pen * (u[0] - g(t))
        return out

    return OdeProblem(
        name="advection",
        dim=N,
        rhs=rhs,
        u0=np.zeros(N),
        functionals=(
            _quadratic_norm_functional("energy", weights=h,
                                       goal=FunctionalGoal.TRACK),
        ),
    )


PROBLEMS = {
    "oscillator": nonlinear_oscillator,
    "kepler": kepler,
    "exp_entropy": exp_entropy,
    "conserved_exponential": conserved_exponential,
    "skew3": skew3,
    "burgers": burgers_fd,
    "kdv": kdv_fourier,
    "advection": advection_sbp,
}
