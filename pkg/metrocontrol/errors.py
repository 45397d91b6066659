"""metrocontrol exceptions

Exceptions:
    MetrocontrolError: Base class for metrocontrol exceptions
    ConfigurationError: An experiment configuration or user input was invalid
    InvalidGridError: A time grid was malformed
    InvalidWeightsError: Estimation weights were negative or all zero
    UnknownModelError: A field model name or import path could not be resolved
    UnknownControlError: A control kind was not recognized
    NumericalError: Base class for numerical failures
    NonFiniteError: An input contained NaN or infinity
    NonUnitaryError: A matrix expected to be unitary was not
    NonPlanarError: Velocities did not lie in a single plane
    ZeroVelocityError: A velocity field vanished identically
    SignificanceError: A finite-difference step was too small to be meaningful
    ScheduleMismatchError: A control schedule does not match the time grid
"""


class MetrocontrolError(Exception):
    """Base class for metrocontrol exceptions."""


class ConfigurationError(MetrocontrolError):
    """Raised when an experiment configuration or input value is invalid.

    Attributes:
        errors: A list of messages describing every problem found.
    """

    def __init__(self, message, errors=None):
        super().__init__(message)
        self.errors = errors if errors is not None else [message]


class InvalidGridError(ConfigurationError):
    """Raised when a time grid has a non-positive duration or fewer than 2 steps."""


class InvalidWeightsError(ConfigurationError):
    """Raised when estimation weights are negative, non-finite or all zero.

    Attributes:
        weights: The rejected weights.
    """

    def __init__(self, weights):
        super().__init__('Weights must be finite, nonnegative and not all zero: '
                         '{}'.format(list(weights)))
        self.weights = weights


class UnknownModelError(ConfigurationError):
    """Raised when a field model cannot be found by name or import path."""


class UnknownControlError(ConfigurationError):
    """Raised when a control kind is not recognized."""


class NumericalError(MetrocontrolError):
    """Base class for numerical failures."""


class NonFiniteError(NumericalError):
    """Raised when a vector or matrix contains NaN or infinite entries."""


class NonUnitaryError(NumericalError):
    """Raised when a matrix expected to be unitary is not.

    Attributes:
        residual: Frobenius norm of U^dagger U - I.
    """

    def __init__(self, residual):
        super().__init__('Matrix is not unitary (residual {:.3e}).'.format(residual))
        self.residual = residual


class NonPlanarError(NumericalError):
    """Raised when velocity vectors span three dimensions.

    Attributes:
        ratio: Smallest over largest eigenvalue of the velocity scatter matrix.
    """

    def __init__(self, ratio):
        super().__init__('Velocities are not planar (eigenvalue ratio {:.3e}).'.format(ratio))
        self.ratio = ratio


class ZeroVelocityError(NumericalError):
    """Raised when a velocity field vanishes on the whole grid.

    Attributes:
        index: The parameter index, or None if every velocity vanishes.
    """

    def __init__(self, index=None):
        if index is None:
            message = 'All velocities vanish on the time grid.'
        else:
            message = 'Velocity of parameter {} vanishes on the time grid.'.format(index)
        super().__init__(message)
        self.index = index


class SignificanceError(NumericalError):
    """Raised when a finite-difference step is below 1e-9.

    Attributes:
        step: The rejected step.
    """

    def __init__(self, step):
        super().__init__('Finite-difference step {:.3e} loses significance.'.format(step))
        self.step = step


class ScheduleMismatchError(NumericalError):
    """Raised when a control schedule was built for a different time grid."""
