"""Batch experiment engine: run configuration, the integration loop,
convergence studies, and side-by-side mode comparisons.

Starting values for k-step methods come from the exact solution when one
is available and otherwise from relaxed SSPRK(3,3) steps at the same
nominal step size.  A run marches until the accepted time reaches the
final time; the state exactly at the final time is additionally reported
through dense output.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .core import FunctionalGoal, OdeProblem, StepHistory, old_values
from .errors import ConfigError, RelaxodeError
from .lmm import (
    LmmScheme,
    NewtonConfig,
    adams_scheme,
    bdf_scheme,
    dense_output,
    ebdf_scheme,
    lmm_step_explicit,
    lmm_step_implicit,
    make_grid,
    nystrom_scheme,
    solve_order_conditions,
    ssp32_scheme,
    ssp43_scheme,
    StepGrid,
)
from .problems import PROBLEMS
from .projection import ProjectionConfig, project
from .relaxation import (
    Adapt,
    Estimator,
    Mode,
    PseudotimeState,
    RelaxationConfig,
    StepDiagnostics,
    estimate_eta,
    relax_step,
    pseudotime_step,
)
from .rk import RK_TABLEAUX, RkTableau, rk_relax_step, rk_step, rk_eta_estimate, ssprk33
from .rootfind import RootConfig

_LMM_FAMILIES = {
    "adams": (adams_scheme, 1, 5),
    "nystrom": (nystrom_scheme, 2, 5),
    "ebdf": (ebdf_scheme, 1, 5),
    "bdf": (bdf_scheme, 1, 5),
}
_FIXED_OK_FAMILIES = ("adams", "nystrom", "ssp")
_METHOD_RE = re.compile(r"^(adams|nystrom|ebdf|bdf)([1-9])$")


@dataclass(frozen=True)
class Method:
    """Resolved integration method: either an LMM scheme or an RK tableau."""

    name: str
    scheme: Optional[LmmScheme] = None
    tableau: Optional[RkTableau] = None

    @property
    def is_rk(self) -> bool:
        return self.tableau is not None

    @property
    def k(self) -> int:
        return 1 if self.is_rk else self.scheme.k

    @property
    def p(self) -> int:
        return self.tableau.p if self.is_rk else self.scheme.p

    @property
    def family(self) -> str:
        if self.is_rk:
            return "rk"
        return re.sub(r"\d+$", "", self.scheme.name) or self.scheme.name


def list_methods() -> list[dict]:
    rows = []
    for fam, (maker, kmin, kmax) in sorted(_LMM_FAMILIES.items()):
        for k in range(kmin, kmax + 1):
            s = maker(k)
            rows.append({"name": s.name, "type": "lmm", "k": s.k, "p": s.p,
                         "implicit": not s.explicit})
    for name in ("ssp32", "ssp43"):
        s = resolve_method(name).scheme
        rows.append({"name": name, "type": "lmm", "k": s.k, "p": s.p,
                     "implicit": False})
    for name, maker in sorted(RK_TABLEAUX.items()):
        t = maker()
        rows.append({"name": name, "type": "rk", "k": 1, "p": t.p,
                     "implicit": False})
    return rows


def resolve_method(name: str) -> Method:
    name = name.strip().lower()
    if name in RK_TABLEAUX:
        return Method(name=name, tableau=RK_TABLEAUX[name]())
    if name == "ssp32":
        return Method(name=name, scheme=ssp32_scheme())
    if name == "ssp43":
        return Method(name=name, scheme=ssp43_scheme())
    m = _METHOD_RE.match(name)
    if m:
        fam, k = m.group(1), int(m.group(2))
        maker, kmin, kmax = _LMM_FAMILIES[fam]
        if not (kmin <= k <= kmax):
            raise ConfigError(f"{fam} supports k in [{kmin}, {kmax}], got {k}")
        return Method(name=name, scheme=maker(k))
    raise ConfigError(f"unknown method {name!r}; see `list-methods`")


def build_problem(name: str, params: Optional[dict] = None) -> OdeProblem:
    name = name.strip().lower()
    if name not in PROBLEMS:
        raise ConfigError(f"unknown problem {name!r}; see `list-problems`")
    try:
        return PROBLEMS[name](**(params or {}))
    except TypeError as exc:
        raise ConfigError(f"bad parameters for problem {name!r}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"bad parameters for problem {name!r}: {exc}") from exc


@dataclass
class RunConfig:
    """Everything one integration run needs; validated before use."""

    problem: str
    method: str
    dt: float
    t_final: float
    mode: str = "relaxation"
    problem_params: dict = field(default_factory=dict)
    m: int = 1
    nu: Optional[tuple[float, ...]] = None
    estimator: str = "auto"
    gauss_nodes: Optional[int] = None
    adapt: str = "variable_coefficients"
    target_fidx: int = 0
    root_abs_tol: float = 1e-14
    newton_tol: float = 1e-12
    newton_max_iter: int = 50
    reuse_jacobian: bool = False
    save_state: bool = False

    def validated(self):
        """Resolve problem/method and build the relaxation config."""
        if self.dt <= 0.0:
            raise ConfigError("dt must be positive")
        if self.t_final <= 0.0:
            raise ConfigError("t_final must exceed the start time 0")
        problem = build_problem(self.problem, self.problem_params)
        method = resolve_method(self.method)
        try:
            mode = Mode(self.mode)
            adapt = Adapt(self.adapt)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not (0 <= self.target_fidx < len(problem.functionals)):
            raise ConfigError(
                f"target_fidx {self.target_fidx} out of range for "
                f"{len(problem.functionals)} functional(s)")
        if mode in (Mode.RELAXATION, Mode.IDT) and method.p < 2:
            raise ConfigError(f"{method.name} has order {method.p}; "
                              "relaxation needs order >= 2")
        if method.is_rk and self.m != 1:
            raise ConfigError("Runge-Kutta relaxation supports m = 1 only")
        nu = self.nu if self.nu is not None else tuple(
            [0.0] * (self.m - 1) + [1.0])
        if adapt is Adapt.FIXED:
            if mode not in (Mode.RELAXATION, Mode.IDT):
                raise ConfigError("fixed coefficients only make sense with relaxation")
            if method.is_rk or method.family not in _FIXED_OK_FAMILIES:
                raise ConfigError(
                    f"fixed-coefficient mode needs a non-negative-alpha LMM "
                    f"family {_FIXED_OK_FAMILIES}, got {method.name}")
        fn = problem.functionals[self.target_fidx]
        est_name = self.estimator
        if est_name == "auto":
            if fn.goal is FunctionalGoal.CONSERVE:
                est_name = "conserve"
            elif method.family == "ssp":
                est_name = "method_quadrature"
            else:
                est_name = "dense_gauss"
        try:
            estimator = Estimator(est_name)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        nodes = self.gauss_nodes
        if nodes is None:
            nodes = 1 if method.k == 2 else 2
        if nodes not in (1, 2):
            raise ConfigError("gauss_nodes must be 1 or 2")
        try:
            relax_cfg = RelaxationConfig(
                mode=mode, m=self.m, nu=tuple(nu), estimator=estimator,
                gauss_nodes=nodes, adapt=adapt, target_fidx=self.target_fidx,
                root_cfg=RootConfig(abs_tol=self.root_abs_tol),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        newton_cfg = NewtonConfig(tol=self.newton_tol,
                                  max_iter=self.newton_max_iter,
                                  reuse_jacobian=self.reuse_jacobian)
        return problem, method, relax_cfg, newton_cfg


@dataclass
class RunResult:
    config: RunConfig
    times: np.ndarray
    gammas: np.ndarray
    etas: np.ndarray            # one row per accepted step
    states: Optional[np.ndarray]
    u_final: np.ndarray         # last accepted state
    t_realized: float           # its time
    u_at_T: np.ndarray          # dense-output state at exactly t_final
    taus: Optional[np.ndarray] = None
    diagnostics: list = field(default_factory=list)
    n_start: int = 0            # number of starting entries (gamma fixed there)

    def max_gamma_deviation(self) -> float:
        g = self.gammas[self.n_start:]
        return float(np.max(np.abs(g - 1.0))) if g.size else 0.0

    def eta_drift(self, fidx: int = 0) -> float:
        col = self.etas[:, fidx]
        return float(np.max(np.abs(col - col[0])))


def _start_history(problem: OdeProblem, method: Method,
                   cfg: RelaxationConfig, dt: float):
    """k starting entries: exact solution, or relaxed SSPRK(3,3) steps.

    Stiff semidiscretizations always start with relaxed steps: sampling
    their continuum solution would seed the run with the spatial error in
    the discrete functionals, which relaxation then freezes in.
    """
    k = method.k
    capacity = max(k, cfg.m) + 2
    history = StepHistory(capacity)
    rows = []
    if problem.exact_solution is not None and not problem.stiff:
        for j in range(k):
            t = j * dt
            u = problem.exact_solution(t) if j else problem.u0
            history.push_state(problem, t, u)
            rows.append((t, 1.0))
        return history, rows
    history.push_state(problem, 0.0, problem.u0)
    rows.append((0.0, 1.0))
    starter = ssprk33()
    start_cfg = replace(cfg, mode=Mode.RELAXATION, m=1, nu=(1.0,))
    t, u = 0.0, problem.u0
    for _ in range(k - 1):
        t, u, gamma = rk_relax_step(starter, problem, cfg.target_fidx,
                                    t, u, dt, start_cfg)
        history.push_state(problem, t, u)
        rows.append((t, gamma))
    return history, rows


def _projection_target(history, problem, cfg, t_new, u_new, coeffs):
    fidx = cfg.target_fidx
    _, _, eta_old_all = old_values(history, cfg.m, cfg.nu)
    return estimate_eta(cfg, history, problem, fidx,
                        float(eta_old_all[fidx]), t_new, u_new, coeffs)


def run(config: RunConfig) -> RunResult:
    """Integrate one configuration until the accepted time reaches t_final."""
    problem, method, cfg, newton_cfg = config.validated()
    dt, T = config.dt, config.t_final
    history, start_rows = _start_history(problem, method, cfg, dt)
    if history.last.t >= T:
        raise ConfigError("starting procedure already reaches t_final; reduce dt")

    times = [r[0] for r in start_rows]
    gammas = [r[1] for r in start_rows]
    etas = [history[i].eta.copy() for i in range(len(history))]
    states = [history[i].u.copy() for i in range(len(history))] \
        if config.save_state else None
    taus = list(times) if cfg.adapt is Adapt.FIXED else None
    diagnostics = []
    pstate = PseudotimeState(tau=history.last.t, t=history.last.t)

    coeffs_fixed = None
    if cfg.adapt is Adapt.FIXED:
        grid = StepGrid(omega=np.arange(method.k + 1, dtype=float), dt_ref=dt)
        coeffs_fixed = solve_order_conditions(method.scheme, grid)

    max_steps = int(math.ceil(T / dt * 2.0)) + method.k + 16
    step_index = 0
    pcfg = ProjectionConfig(newton_tol=config.newton_tol,
                            max_iter=config.newton_max_iter)

    def finished():
        # the final time is physical in every mode; in fixed-coefficient
        # mode the pseudotime then stops wherever the dilation puts it
        return history.last.t >= T - 1e-12 * T

    while not finished():
        if step_index >= max_steps:
            raise RelaxodeError(
                f"run exceeded {max_steps} steps before reaching t={T}")
        step_index += 1
        if cfg.adapt is Adapt.FIXED:
            tau, t_g, u_g, gamma, diag = pseudotime_step(
                history, problem, cfg, coeffs_fixed, pstate, dt)
            taus.append(tau)
        elif method.is_rk:
            t_prev, u_prev = history.last.t, history.last.u
            t_new = t_prev + dt
            if cfg.mode is Mode.BASELINE:
                u_new, _ = rk_step(method.tableau, problem, t_prev, u_prev, dt)
                history.push_state(problem, t_new, u_new)
                gamma, diag = 1.0, None
            elif cfg.mode is Mode.PROJECTION:
                u_new, stages = rk_step(method.tableau, problem, t_prev, u_prev, dt)
                fn = problem.functionals[cfg.target_fidx]
                if fn.goal is FunctionalGoal.CONSERVE:
                    target = float(history.last.eta[cfg.target_fidx])
                else:
                    target = rk_eta_estimate(method.tableau, problem,
                                             cfg.target_fidx, t_prev, u_prev,
                                             stages, dt)
                u_l, lam = project(u_new, target, fn, pcfg)
                history.push_state(problem, t_new, u_l)
                gamma = 1.0
                diag = StepDiagnostics(gamma=1.0, residual=fn.eval(u_l) - target,
                                       eta_estimate=target, projection_lambda=lam)
            else:
                t_g, u_g, gamma = rk_relax_step(
                    method.tableau, problem, cfg.target_fidx,
                    t_prev, u_prev, dt, cfg)
                history.push_state(problem, t_g, u_g)
                diag = None
        else:
            t_new = history.last.t + dt
            grid = make_grid(history, method.k, t_new, dt)
            coeffs = solve_order_conditions(method.scheme, grid)
            if coeffs.explicit:
                t_new, u_new = lmm_step_explicit(coeffs, history, problem)
            else:
                t_new, u_new = lmm_step_implicit(coeffs, history, problem,
                                                 newton_cfg)
            if cfg.mode is Mode.BASELINE:
                history.push_state(problem, t_new, u_new)
                gamma, diag = 1.0, None
            elif cfg.mode is Mode.PROJECTION:
                target = _projection_target(history, problem, cfg,
                                            t_new, u_new, coeffs)
                fn = problem.functionals[cfg.target_fidx]
                u_l, lam = project(u_new, target, fn, pcfg)
                history.push_state(problem, t_new, u_l)
                gamma = 1.0
                diag = StepDiagnostics(gamma=1.0, residual=fn.eval(u_l) - target,
                                       eta_estimate=target, projection_lambda=lam)
            else:
                t_g, u_g, gamma, diag = relax_step(
                    (t_new, u_new), history, problem, cfg,
                    coeffs=coeffs, step_index=step_index)
        entry = history.last
        times.append(entry.t)
        gammas.append(gamma)
        etas.append(entry.eta.copy())
        if states is not None:
            states.append(entry.u.copy())
        if diag is not None:
            diagnostics.append(diag)

    u_at_T = dense_output(history, problem, T, k=max(2, method.k))
    return RunResult(
        config=config,
        times=np.array(times),
        gammas=np.array(gammas),
        etas=np.array(etas),
        states=np.array(states) if states is not None else None,
        u_final=history.last.u.copy(),
        t_realized=history.last.t,
        u_at_T=u_at_T,
        taus=np.array(taus) if taus is not None else None,
        diagnostics=diagnostics,
        n_start=len(start_rows),
    )


def reference_solution(problem_name: str, params: dict, t_max: float, dt: float):
    """Fine baseline RK4 run turned into a callable via cubic Hermite
    interpolation of the stored (u, f) pairs."""
    problem = build_problem(problem_name, params)
    n = int(math.ceil(t_max / dt)) + 1
    ts = np.empty(n + 1)
    us = np.empty((n + 1, problem.dim))
    fs = np.empty((n + 1, problem.dim))
    tab = RK_TABLEAUX["rk4"]()
    t, u = 0.0, problem.u0.astype(float)
    for i in range(n + 1):
        ts[i] = t
        us[i] = u
        fs[i] = problem.f(t, u)
        if i < n:
            u, _ = rk_step(tab, problem, t, u, dt)
            t += dt

    def interp(tq: float) -> np.ndarray:
        if tq <= 0.0:
            return us[0].copy()
        if tq >= ts[-1]:
            return us[-1].copy()
        i = min(int(tq / dt), n - 1)
        h = ts[i + 1] - ts[i]
        s = (tq - ts[i]) / h
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        return h00 * us[i] + h * h10 * fs[i] + h01 * us[i + 1] + h * h11 * fs[i + 1]

    return interp


@dataclass
class ConvergenceRow:
    dt: float
    error: float
    eoc: Optional[float]
    max_gamma_dev: float
    status: str = "ok"


def final_state_error(result: RunResult, reference) -> float:
    """Discrete l2 error of the final accepted state, against the exact
    solution evaluated at the realized final time."""
    u_ref = reference(result.t_realized)
    return float(np.linalg.norm(result.u_final - u_ref))


def convergence_study(config: RunConfig, dts) -> list[ConvergenceRow]:
    """Error table over halving step sizes with experimental orders."""
    dts = list(dts)
    if len(dts) < 3:
        raise ConfigError("a convergence study needs at least 3 step sizes")
    for a, b in zip(dts, dts[1:]):
        if abs(a / b - 2.0) > 1e-9:
            raise ConfigError("each step size must halve the previous one")
    problem = build_problem(config.problem, config.problem_params)
    if problem.exact_solution is not None:
        reference = problem.exact_solution
    else:
        reference = reference_solution(config.problem, config.problem_params,
                                       config.t_final + 2.0 * max(dts),
                                       min(dts) / 16.0)
    rows: list[ConvergenceRow] = []
    prev_error = None
    for dt in dts:
        run_cfg = replace(config, dt=dt)
        try:
            result = run(run_cfg)
            err = final_state_error(result, reference)
            eoc = None
            if prev_error is not None and err > 0.0:
                eoc = math.log2(prev_error / err)
            rows.append(ConvergenceRow(dt=dt, error=err, eoc=eoc,
                                       max_gamma_dev=result.max_gamma_deviation()))
            prev_error = err
        except RelaxodeError as exc:
            rows.append(ConvergenceRow(dt=dt, error=math.nan, eoc=None,
                                       max_gamma_dev=math.nan,
                                       status=type(exc).__name__))
            prev_error = None
    return rows


def aggregate_eoc(rows) -> float:
    """Overall experimental order: mean of the per-row orders."""
    vals = [r.eoc for r in rows if r.eoc is not None]
    if not vals:
        raise RelaxodeError("no experimental orders available")
    return float(np.mean(vals))


def compare_modes(config: RunConfig, modes=("baseline", "projection",
                                            "relaxation")) -> dict:
    """Run several modes from identical starting values."""
    results = {}
    for mode in modes:
        results[mode] = run(replace(config, mode=mode))
    return results
