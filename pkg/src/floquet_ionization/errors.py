"""Exception classes shared across the package.

The CLI maps each family to an exit code: configuration/domain problems
exit with 2, numerical-resolution problems with 3.
"""


class FloquetError(Exception):
    """Base class for all package errors."""

    exit_code = 3


class ConfigError(FloquetError, ValueError):
    exit_code = 2


class DomainError(FloquetError, ValueError):
    """An argument lies outside the region where an operation is defined."""

    exit_code = 2


class ResolutionError(FloquetError):
    """A grid, quadrature or sample set is too coarse for the request."""


class NearSingularError(FloquetError):
    """I - C(sigma) is numerically singular; carries the smallest singular value."""

    def __init__(self, message, smallest_singular_value):
        super().__init__(message)
        self.smallest_singular_value = smallest_singular_value


class ContractionError(FloquetError):
    """Neumann iteration requested for a non-contractive operator."""

    def __init__(self, message, norm):
        super().__init__(message)
        self.norm = norm


class NonSimplePoleError(FloquetError):
    pass


class ClassificationError(FloquetError):
    pass


class ValidityError(FloquetError):
    """Asymptotic expansion evaluated outside its certified range."""


class FitQualityError(FloquetError):
    pass
