import math

import numpy as np
import pytest

from relaxode.core import Functional, FunctionalKind, OdeProblem, StepHistory
from relaxode.errors import NegativeCoefficientsError, StepTooLargeError
from relaxode.lmm import (
    StepGrid,
    adams_scheme,
    bdf_scheme,
    dense_output,
    make_grid,
    lmm_step_explicit,
    solve_order_conditions,
    ssp32_scheme,
)
from relaxode.problems import (
    conserved_exponential,
    exp_entropy,
    nonlinear_oscillator,
    skew3,
)
from relaxode.relaxation import (
    Adapt,
    Estimator,
    Mode,
    PseudotimeState,
    RelaxationConfig,
    estimate_eta_gauss,
    estimate_eta_method,
    pseudotime_step,
    relax_step,
    residual_r,
)


def history_from_exact(problem, k, dt):
    hist = StepHistory(k + 3)
    for j in range(k):
        hist.push_state(problem, j * dt, problem.exact_solution(j * dt))
    return hist


def quad_fn():
    return Functional(name="e", eval=lambda u: 0.5 * float(np.dot(u, u)),
                      deriv_dot=lambda u, v: float(np.dot(u, v)),
                      kind=FunctionalKind.QUADRATIC_NORM)


class TestResidual:
    def test_zero_at_origin_for_single_base_point(self):
        fn = quad_fn()
        u_old = np.array([0.3, 0.4])
        u_new = np.array([0.5, 0.2])
        eta_old = fn.eval(u_old)
        assert residual_r(0.0, u_old, u_new, eta_old, eta_old, fn) == 0.0

    def test_nonpositive_at_origin_for_convex_combination(self):
        # Jensen: eta of the combined state is below the combined eta values
        rng = np.random.default_rng(21)
        fn = quad_fn()
        for _ in range(100):
            states = rng.normal(size=(3, 4))
            w = rng.random(3)
            w /= w.sum()
            u_old = (w[:, None] * states).sum(axis=0)
            eta_old = float(sum(wi * fn.eval(s) for wi, s in zip(w, states)))
            u_new = u_old + 0.1 * rng.normal(size=4)
            r0 = residual_r(0.0, u_old, u_new, eta_old, eta_old, fn)
            assert r0 <= 1e-14

    def test_matches_quadratic_expansion(self):
        # r(g) = c g^2 + b g + a with the closed-form coefficient geometry
        rng = np.random.default_rng(22)
        fn = quad_fn()
        for _ in range(50):
            u_old = rng.normal(size=3)
            u_new = u_old + 0.2 * rng.normal(size=3)
            eta_old = fn.eval(u_old) - abs(rng.normal()) * 0.01
            eta_new = eta_old + 0.05 * rng.normal()
            d = u_new - u_old
            a = fn.eval(u_old) - eta_old
            b = fn.deriv_dot(u_old, d) - (eta_new - eta_old)
            c = fn.eval(d)
            for g in (-0.5, 0.0, 0.7, 1.0, 1.9):
                expected = c * g * g + b * g + a
                assert residual_r(g, u_old, u_new, eta_old, eta_new, fn) == \
                    pytest.approx(expected, rel=1e-12, abs=1e-14)


class TestMethodEstimate:
    def test_conservative_problem_reduces_to_state_combination(self):
        problem = nonlinear_oscillator()
        hist = history_from_exact(problem, 3, 0.1)
        coeffs = solve_order_conditions(ssp32_scheme(),
                                        StepGrid(np.arange(4.0), 0.1))
        est = estimate_eta_method(coeffs, hist, problem, 0)
        etas = [e.eta[0] for e in hist.last_k(3)]
        assert est == pytest.approx(float(np.dot(coeffs.alpha, etas)), abs=1e-14)

    def test_linear_functional_matches_stepped_value_exactly(self):
        problem = skew3()
        rng = np.random.default_rng(23)
        hist = StepHistory(5)
        for j in range(3):
            hist.push_state(problem, 0.1 * j, rng.normal(size=3))
        coeffs = solve_order_conditions(ssp32_scheme(),
                                        StepGrid(np.arange(4.0), 0.1))
        _, u_new = lmm_step_explicit(coeffs, hist, problem)
        est = estimate_eta_method(coeffs, hist, problem, 1)
        assert est == pytest.approx(problem.functionals[1].eval(u_new), abs=1e-13)

    def test_exp_entropy_value_from_analytic_starts(self):
        problem = exp_entropy()
        dt = 0.1
        hist = history_from_exact(problem, 3, dt)
        coeffs = solve_order_conditions(ssp32_scheme(),
                                        StepGrid(np.arange(4.0), dt))
        u2 = problem.exact_solution(2 * dt)[0]
        expected = (0.25 * math.exp(problem.exact_solution(0.0)[0])
                    + 0.75 * math.exp(u2)
                    + dt * 1.5 * (-math.exp(2 * u2)))
        est = estimate_eta_method(coeffs, hist, problem, 0)
        assert est == pytest.approx(expected, rel=1e-13)
        # dissipative decrease relative to the newest eta, at leading order
        assert est <= math.exp(u2)

    def test_negative_coefficients_rejected(self):
        problem = exp_entropy()
        hist = history_from_exact(problem, 2, 0.1)
        coeffs = solve_order_conditions(adams_scheme(2),
                                        StepGrid(np.arange(3.0), 0.1))
        with pytest.raises(NegativeCoefficientsError):
            estimate_eta_method(coeffs, hist, problem, 0)


class TestGaussEstimate:
    def _dense(self, hist, problem, k, t_max):
        return lambda tau: dense_output(hist, problem, tau, k=k, t_max=t_max)

    def test_conservative_rate_returns_base(self):
        problem = nonlinear_oscillator()
        hist = history_from_exact(problem, 2, 0.1)
        dense = self._dense(hist, problem, 2, 0.2)
        for nodes in (1, 2):
            est = estimate_eta_gauss(hist, problem, 0, 0.1, 0.2, nodes, dense)
            assert est == pytest.approx(hist.last.eta[0], abs=1e-13)

    def test_constant_rate_exact_for_both_node_counts(self):
        # eta linear, f constant: the rate eta'f is a constant
        fn = Functional(name="sum", eval=lambda u: float(u.sum()),
                        deriv_dot=lambda u, v: float(v.sum()),
                        kind=FunctionalKind.LINEAR)
        c = np.array([0.3, -0.7])
        problem = OdeProblem(name="drift", dim=2, rhs=lambda t, u: c.copy(),
                             u0=np.zeros(2), functionals=(fn,))
        hist = StepHistory(4)
        hist.push_state(problem, 0.0, np.array([0.0, 0.0]))
        hist.push_state(problem, 0.5, 0.5 * c)
        dense = self._dense(hist, problem, 2, 1.0)
        rate = float(c.sum())
        for nodes in (1, 2):
            est = estimate_eta_gauss(hist, problem, 0, 0.5, 1.0, nodes, dense)
            assert est == pytest.approx(hist.last.eta[0] + 0.5 * rate, abs=1e-13)

    def test_linear_rate_exact_for_both_node_counts(self):
        # f constant, eta quadratic: the rate <y(t), c> is linear in time,
        # integrated exactly by the midpoint rule and by two-node Gauss
        fn = quad_fn()
        c = np.array([1.0, 2.0])
        problem = OdeProblem(name="ramp", dim=2, rhs=lambda t, u: c.copy(),
                             u0=np.zeros(2), functionals=(fn,))
        hist = StepHistory(4)
        u0 = np.array([0.2, -0.1])
        hist.push_state(problem, 0.0, u0)
        hist.push_state(problem, 0.4, u0 + 0.4 * c)
        dense = self._dense(hist, problem, 2, 1.0)
        # analytic: eta(u0 + t c), d eta/dt = <u0 + t c, c>
        t0, t1 = 0.4, 1.0
        exact = fn.eval(u0 + t1 * c) - fn.eval(u0 + t0 * c)
        for nodes in (1, 2):
            est = estimate_eta_gauss(hist, problem, 0, t0, t1, nodes, dense)
            assert est == pytest.approx(hist.last.eta[0] + exact, abs=1e-13)

    def test_unknown_base_time_rejected(self):
        problem = nonlinear_oscillator()
        hist = history_from_exact(problem, 2, 0.1)
        dense = self._dense(hist, problem, 2, 0.2)
        with pytest.raises(ValueError):
            estimate_eta_gauss(hist, problem, 0, 0.05, 0.2, 2, dense)


class TestRelaxStep:
    def _step(self, problem, scheme, hist, dt, cfg):
        t_new = hist.last.t + dt
        grid = make_grid(hist, scheme.k, t_new, dt)
        coeffs = solve_order_conditions(scheme, grid)
        t_new, u_new = lmm_step_explicit(coeffs, hist, problem)
        return relax_step((t_new, u_new), hist, problem, cfg, coeffs=coeffs)

    def test_oscillator_energy_enforced_every_step(self):
        problem = nonlinear_oscillator()
        scheme = adams_scheme(3)
        cfg = RelaxationConfig()
        hist = history_from_exact(problem, 3, 0.05)
        for _ in range(100):
            t_g, u_g, gamma, diag = self._step(problem, scheme, hist, 0.05, cfg)
            assert abs(0.5 * np.dot(u_g, u_g) - 0.5) <= 1e-12
            assert abs(diag.residual) <= 1e-13

    def test_conservation_for_larger_m(self):
        problem = nonlinear_oscillator()
        scheme = adams_scheme(3)
        cfg = RelaxationConfig(m=2, nu=(0.5, 0.5))
        hist = history_from_exact(problem, 3, 0.05)
        for _ in range(60):
            t_g, u_g, gamma, diag = self._step(problem, scheme, hist, 0.05, cfg)
        assert 0.5 * np.dot(u_g, u_g) == pytest.approx(0.5, abs=1e-11)

    def test_exp_entropy_monotone_with_single_base_point(self):
        problem = exp_entropy()
        scheme = ssp32_scheme()
        cfg = RelaxationConfig(estimator=Estimator.METHOD_QUADRATURE)
        hist = history_from_exact(problem, 3, 0.05)
        prev = hist.last.eta[0]
        for _ in range(100):
            t_g, u_g, gamma, diag = self._step(problem, scheme, hist, 0.05, cfg)
            eta = problem.functionals[0].eval(u_g)
            assert eta < prev
            prev = eta

    def test_conserved_exponential_exact_at_accepted_times(self):
        # any relaxed multistep method lands on the exact trajectory here
        problem = conserved_exponential()
        scheme = adams_scheme(2)
        cfg = RelaxationConfig()
        hist = history_from_exact(problem, 2, 0.25)
        for _ in range(6):
            t_g, u_g, gamma, diag = self._step(problem, scheme, hist, 0.25, cfg)
            assert np.linalg.norm(u_g - problem.exact_solution(t_g)) <= 1e-12

    def test_idt_mode_keeps_new_time(self):
        problem = nonlinear_oscillator()
        scheme = adams_scheme(3)
        cfg = RelaxationConfig(mode=Mode.IDT)
        hist = history_from_exact(problem, 3, 0.05)
        t_prev = hist.last.t
        t_g, u_g, gamma, diag = self._step(problem, scheme, hist, 0.05, cfg)
        assert t_g == pytest.approx(t_prev + 0.05, rel=1e-14)
        assert 0.5 * np.dot(u_g, u_g) == pytest.approx(0.5, abs=1e-13)

    def test_oversized_step_surfaces_as_step_too_large(self):
        problem = exp_entropy()
        scheme = adams_scheme(2)
        cfg = RelaxationConfig(estimator=Estimator.DENSE_GAUSS, gauss_nodes=1)
        hist = history_from_exact(problem, 2, 2.0)
        with pytest.raises(StepTooLargeError):
            for _ in range(40):
                self._step(problem, scheme, hist, 2.0, cfg)

    def test_gamma_deviation_rate_on_generic_problem(self):
        # existence-lemma rate: gamma - 1 vanishes like dt^(p-1); measured
        # on a problem without the Euclidean-Hamiltonian error geometry
        problem = conserved_exponential()
        scheme = adams_scheme(2)
        cfg = RelaxationConfig()
        dts = (0.1, 0.05, 0.025, 0.0125)
        devs = []
        for dt in dts:
            hist = history_from_exact(problem, 2, dt)
            worst = 0.0
            for _ in range(int(2.0 / dt)):
                _, _, gamma, _ = self._step(problem, scheme, hist, dt, cfg)
                worst = max(worst, abs(gamma - 1.0))
            devs.append(worst)
        slope = float(np.polyfit(np.log(dts), np.log(devs), 1)[0])
        assert slope == pytest.approx(scheme.p - 1, abs=0.4)

    def test_history_appended_with_recomputed_caches(self):
        problem = nonlinear_oscillator()
        scheme = adams_scheme(3)
        cfg = RelaxationConfig()
        hist = history_from_exact(problem, 3, 0.05)
        t_g, u_g, gamma, diag = self._step(problem, scheme, hist, 0.05, cfg)
        entry = hist.last
        assert entry.t == t_g
        assert np.array_equal(entry.u, u_g)
        assert np.allclose(entry.f, problem.f(t_g, u_g))


class TestPseudotime:
    def _run(self, scheme, dtau, t_final, estimator=Estimator.METHOD_QUADRATURE):
        problem = exp_entropy()
        k = scheme.k
        coeffs = solve_order_conditions(scheme, StepGrid(np.arange(k + 1.0), dtau))
        cfg = RelaxationConfig(estimator=estimator, adapt=Adapt.FIXED)
        hist = history_from_exact(problem, k, dtau)
        state = PseudotimeState(tau=hist.last.t, t=hist.last.t)
        while hist.last.t < t_final:
            tau, t_g, u_g, gamma, diag = pseudotime_step(
                hist, problem, cfg, coeffs, state, dtau)
        return state

    def test_time_equals_pseudotime_when_gamma_is_one(self):
        # conservative linear invariant: the estimate is exact, gamma = 1
        problem = skew3()
        scheme = ssp32_scheme()
        coeffs = solve_order_conditions(scheme, StepGrid(np.arange(4.0), 0.1))
        cfg = RelaxationConfig(estimator=Estimator.METHOD_QUADRATURE,
                               adapt=Adapt.FIXED, target_fidx=1)
        hist = StepHistory(6)
        for j in range(3):
            hist.push_state(problem, 0.1 * j, problem.u0 * (1.0 - 0.001 * j))
        state = PseudotimeState(tau=0.2, t=0.2)
        for _ in range(20):
            tau, t_g, u_g, gamma, diag = pseudotime_step(
                hist, problem, cfg, coeffs, state, 0.1)
            assert gamma == pytest.approx(1.0, abs=1e-12)
            assert t_g == pytest.approx(tau, abs=1e-12)

    def test_drift_grows_and_scale_is_tracked(self):
        state = self._run(ssp32_scheme(), 0.05, 2.0)
        assert abs(state.t - state.tau) > 0.0
        assert state.gamma_scale_max > 0.0

    def test_negative_alpha_family_rejected(self):
        problem = exp_entropy()
        scheme = bdf_scheme(2)
        coeffs = solve_order_conditions(scheme, StepGrid(np.arange(3.0), 0.1))
        cfg = RelaxationConfig(estimator=Estimator.CONSERVE, adapt=Adapt.FIXED)
        hist = history_from_exact(problem, 2, 0.1)
        state = PseudotimeState(tau=0.1, t=0.1)
        with pytest.raises(ValueError):
            pseudotime_step(hist, problem, cfg, coeffs, state, 0.1)


def test_relaxation_config_validation():
    with pytest.raises(ValueError):
        RelaxationConfig(m=2, nu=(1.0,))
    with pytest.raises(ValueError):
        RelaxationConfig(nu=(1.2,))
    with pytest.raises(ValueError):
        RelaxationConfig(gauss_nodes=3)
