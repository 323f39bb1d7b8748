"""Exception hierarchy.

Each family maps onto a CLI exit code: configuration problems exit with 2,
capacity problems with 3, numerical failures with 4.
"""

from __future__ import annotations


class SuperradError(Exception):
    exit_code = 1


class ConfigError(SuperradError, ValueError):
    exit_code = 2


class CapacityError(SuperradError):
    """Requested Hilbert/Liouville space exceeds the configured memory bound."""

    exit_code = 3


class UnsupportedSizeError(SuperradError, ValueError):
    exit_code = 2


class NumericalError(SuperradError, ArithmeticError):
    exit_code = 4


class IntegratorInstabilityError(NumericalError):
    pass


class InternalConsistencyError(NumericalError):
    pass


class PhotonCutoffError(NumericalError):
    """Population of the highest retained Fock state exceeded the tolerance."""


class ConvergenceError(NumericalError):
    def __init__(self, message: str, last_state=None):
        super().__init__(message)
        self.last_state = last_state


class DegenerateSteadyStateError(NumericalError):
    def __init__(self, message: str, multiplicity: int):
        super().__init__(message)
        self.multiplicity = multiplicity


class EmptyEstimateError(SuperradError, ValueError):
    exit_code = 4


class TrajectoryError(NumericalError):
    """Wraps a failure inside one ensemble member, tagged with its index."""

    def __init__(self, index: int, cause: BaseException):
        super().__init__(f"trajectory {index} failed: {cause}")
        self.index = index
        self.cause = cause
        if isinstance(cause, SuperradError):
            self.exit_code = cause.exit_code
