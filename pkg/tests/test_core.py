import numpy as np
import pytest

from relaxode.core import (
    Functional,
    FunctionalKind,
    StepHistory,
    eta_dot,
    old_values,
)
from relaxode.problems import (
    advection_sbp,
    exp_entropy,
    nonlinear_oscillator,
    skew3,
)


def quad_norm():
    return Functional(
        name="energy",
        eval=lambda u: 0.5 * float(np.dot(u, u)),
        deriv_dot=lambda u, v: float(np.dot(u, v)),
        kind=FunctionalKind.QUADRATIC_NORM,
    )


class TestFunctional:
    def test_quadratic_norm_directional_derivative_matches_fd(self):
        # central finite difference at h=1e-5, relative error <= 1e-6
        rng = np.random.default_rng(7)
        fn = quad_norm()
        h = 1e-5
        for _ in range(25):
            u = rng.normal(size=6)
            v = rng.normal(size=6)
            fd = (fn.eval(u + h * v) - fn.eval(u - h * v)) / (2.0 * h)
            exact = fn.deriv_dot(u, v)
            assert abs(fd - exact) <= 1e-6 * max(1.0, abs(exact))

    def test_deriv_dot_linear_in_direction(self):
        rng = np.random.default_rng(8)
        for problem in (nonlinear_oscillator(), exp_entropy(), skew3()):
            for fn in problem.functionals:
                u = rng.normal(size=problem.dim) + 1.5
                v = rng.normal(size=problem.dim)
                w = rng.normal(size=problem.dim)
                lhs = fn.deriv_dot(u, 2.0 * v + 0.5 * w)
                rhs = 2.0 * fn.deriv_dot(u, v) + 0.5 * fn.deriv_dot(u, w)
                assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)

    def test_linear_functional_additive(self):
        rng = np.random.default_rng(9)
        mass = skew3().functionals[1]
        u, v = rng.normal(size=3), rng.normal(size=3)
        assert mass.eval(u + v) == pytest.approx(mass.eval(u) + mass.eval(v), rel=1e-13)

    def test_gradient_sampled_matches_analytic(self):
        rng = np.random.default_rng(10)
        fn = quad_norm()
        sampled = Functional(name="e", eval=fn.eval, deriv_dot=fn.deriv_dot)
        u = rng.normal(size=5)
        assert np.allclose(sampled.gradient(u), u, atol=1e-14)


class TestEtaDot:
    def test_oscillator_skew_structure_gives_zero(self):
        problem = nonlinear_oscillator()
        for u in ([1.0, 0.0], [0.3, -0.8], [2.0, 1.0]):
            assert eta_dot(problem, 0, 0.0, np.array(u)) == pytest.approx(0.0, abs=1e-15)

    def test_exp_entropy_rate(self):
        # d/dt exp(u) along u' = -exp(u) is -exp(2u)
        problem = exp_entropy()
        val = eta_dot(problem, 0, 0.0, np.array([0.5]))
        assert val == pytest.approx(-np.exp(1.0), rel=1e-12)
        assert val == pytest.approx(-2.718282, abs=5e-7)

    def test_advection_zero_state_zero_boundary(self):
        problem = advection_sbp(16)
        # g(0) = sin(0) = 0, u = 0
        assert eta_dot(problem, 0, 0.0, np.zeros(16)) == pytest.approx(0.0, abs=1e-15)


class TestStepHistory:
    def test_times_must_increase(self):
        problem = nonlinear_oscillator()
        hist = StepHistory(4)
        hist.push_state(problem, 0.0, np.array([1.0, 0.0]))
        hist.push_state(problem, 0.1, np.array([0.9, 0.1]))
        with pytest.raises(ValueError):
            hist.push_state(problem, 0.1, np.array([0.8, 0.2]))
        with pytest.raises(ValueError):
            hist.push_state(problem, 0.05, np.array([0.8, 0.2]))

    def test_eviction_keeps_most_recent(self):
        problem = nonlinear_oscillator()
        hist = StepHistory(3)
        for j in range(6):
            hist.push_state(problem, 0.1 * j, np.array([1.0, 0.1 * j]))
        assert len(hist) == 3
        assert hist.times() == pytest.approx([0.3, 0.4, 0.5])

    def test_entries_cache_rhs_and_eta(self):
        problem = nonlinear_oscillator()
        hist = StepHistory(3)
        u = np.array([0.6, 0.8])
        entry = hist.push_state(problem, 0.0, u)
        assert np.allclose(entry.f, problem.f(0.0, u))
        assert entry.eta[0] == pytest.approx(0.5 * np.dot(u, u))


class TestOldValues:
    def _history(self, problem, states, dt=0.1):
        hist = StepHistory(8)
        for j, u in enumerate(states):
            hist.push_state(problem, j * dt, np.asarray(u, dtype=float))
        return hist

    def test_m1_is_bit_exact_identity(self):
        problem = nonlinear_oscillator()
        hist = self._history(problem, [[1.0, 0.0], [0.62, 0.78]])
        t_old, u_old, eta_old = old_values(hist, 1, (1.0,))
        assert t_old == hist.last.t
        assert np.array_equal(u_old, hist.last.u)
        assert eta_old[0] == hist.last.eta[0]

    def test_midpoint_weights_average_eta(self):
        problem = nonlinear_oscillator()
        # eta values 0.4 and 0.6 -> combination 0.5
        a = np.sqrt(0.8)
        b = np.sqrt(1.2)
        hist = self._history(problem, [[a, 0.0], [b, 0.0]])
        _, _, eta_old = old_values(hist, 2, (0.5, 0.5))
        assert eta_old[0] == pytest.approx(0.5, rel=1e-14)

    def test_jensen_gap_for_convex_eta(self):
        # combined eta >= eta(combined state) for the squared norm
        rng = np.random.default_rng(11)
        problem = nonlinear_oscillator()
        fn = problem.functionals[0]
        for _ in range(50):
            states = rng.normal(size=(3, 2))
            hist = self._history(problem, states)
            w = rng.random(3)
            w /= w.sum()
            _, u_old, eta_old = old_values(hist, 3, tuple(w))
            assert eta_old[0] >= fn.eval(u_old) - 1e-14

    def test_weight_validation(self):
        problem = nonlinear_oscillator()
        hist = self._history(problem, [[1.0, 0.0], [0.9, 0.1]])
        with pytest.raises(ValueError):
            old_values(hist, 2, (0.7, 0.7))
        with pytest.raises(ValueError):
            old_values(hist, 2, (1.5, -0.5))
        with pytest.raises(ValueError):
            old_values(hist, 2, (1.0,))
        with pytest.raises(ValueError):
            old_values(hist, 3, (0.5, 0.25, 0.25))
