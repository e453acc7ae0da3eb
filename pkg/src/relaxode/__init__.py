"""Relaxation and orthogonal-projection time integration for ODE systems
with conserved, dissipated, or tracked scalar functionals."""

from .core import (
    Functional,
    FunctionalGoal,
    FunctionalKind,
    HistoryEntry,
    OdeProblem,
    StepHistory,
    eta_dot,
    old_values,
)
from .driver import (
    ConvergenceRow,
    Method,
    RunConfig,
    RunResult,
    aggregate_eoc,
    build_problem,
    compare_modes,
    convergence_study,
    final_state_error,
    list_methods,
    reference_solution,
    resolve_method,
    run,
)
from .errors import (
    ConfigError,
    DegenerateStepError,
    MaxIterError,
    NegativeCoefficientsError,
    NegativeDiscriminantError,
    NewtonDivergedError,
    NoBracketError,
    NonFiniteError,
    RelaxodeError,
    SingularSystemError,
    StepTooLargeError,
)
from .lmm import (
    LmmCoefficients,
    LmmScheme,
    NewtonConfig,
    StepGrid,
    adams_scheme,
    bdf_scheme,
    dense_output,
    ebdf_scheme,
    lmm_step_explicit,
    lmm_step_implicit,
    make_grid,
    nystrom_scheme,
    order_residuals,
    solve_order_conditions,
    ssp32_scheme,
    ssp43_scheme,
)
from .projection import Direction, ProjectionConfig, project
from .relaxation import (
    Adapt,
    Estimator,
    Mode,
    PseudotimeState,
    RelaxationConfig,
    StepDiagnostics,
    estimate_eta,
    estimate_eta_gauss,
    estimate_eta_method,
    pseudotime_step,
    relax_step,
    residual_r,
    solve_relaxation_gamma,
)
from .rk import RK_TABLEAUX, RkTableau, rk4, rk_eta_estimate, rk_relax_step, rk_step, ssprk22, ssprk33
from .rootfind import RootConfig, solve_bracketed, solve_gamma_quadratic

__version__ = "0.1.0"
