"""Exception types shared across the package.

The CLI maps :class:`ConfigError` to exit code 2 and every other
:class:`RelaxodeError` subclass (numerical failures) to exit code 3.
"""


class RelaxodeError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(RelaxodeError):
    """Invalid or inconsistent run configuration."""


class NonFiniteError(RelaxodeError):
    """A right-hand side or step produced NaN or infinity."""


class SingularSystemError(RelaxodeError):
    """Order-condition system is singular or too ill-conditioned to trust."""


class NegativeCoefficientsError(RelaxodeError):
    """Method-based functional estimate requires non-negative coefficients."""


class NewtonDivergedError(RelaxodeError):
    """Newton iteration failed to converge within the iteration cap."""


class NoBracketError(RelaxodeError):
    """No sign change found within the bracket expansion budget.

    For the relaxation parameter this signals that the step size is too
    large for a solution close to one to exist.
    """


class MaxIterError(RelaxodeError):
    """Scalar root iteration exceeded its iteration cap."""


class DegenerateStepError(RelaxodeError):
    """Relaxation direction collapsed (new state almost equals old state)."""


class NegativeDiscriminantError(RelaxodeError):
    """Closed-form relaxation quadratic has no real root (step too large)."""


class StepTooLargeError(RelaxodeError):
    """A relaxation solve failed in a way that indicates an oversized step."""

    def __init__(self, message, dt=None, step_index=None):
        super().__init__(message)
        self.dt = dt
        self.step_index = step_index
