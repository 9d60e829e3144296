"""Exception hierarchy shared by every module of the package."""


class BCLabError(Exception):
    """Base class for all package errors."""


class DomainError(BCLabError, ValueError):
    """An input violates a mathematical precondition."""


class NonSquare(DomainError):
    pass


class NotHermitian(DomainError):
    pass


class IndexOutOfRange(DomainError):
    pass


class NonPositiveMinor(DomainError):
    pass


class NotUnitary(DomainError):
    pass


class NotInBall(DomainError):
    pass


class NotInChamber(DomainError):
    pass


class StencilLeavesChamber(DomainError):
    pass


class InvalidSpec(DomainError):
    pass


class NonIntegrableSpec(InvalidSpec):
    pass


class InsufficientMoments(InvalidSpec):
    pass


class ScheduleViolation(DomainError):
    pass


class UnsupportedExponent(DomainError):
    """The m_p density exponent is negative or p lies below the supported range."""


class SingularTargetWithoutDegenerateHandling(DomainError):
    pass


class ConvergenceFailure(BCLabError, ArithmeticError):
    pass


class DecompositionFailure(ConvergenceFailure):
    pass


class SamplerError(BCLabError, RuntimeError):
    """A sampler gave up, e.g. the rejection cap was exceeded."""


class ConfigError(BCLabError, ValueError):
    """Bad run configuration (unknown key, wrong type, invalid value)."""


class OutOfDualRegion(UserWarning):
    """Fourier evaluation outside the region where the transform is bounded."""
