"""Exception types raised across the package."""


class AccelCertError(Exception):
    """Base class for all package errors."""


class ParameterDomainError(AccelCertError, ValueError):
    """A parameter lies outside the domain where a formula is defined."""


class UnsupportedOperationError(AccelCertError, NotImplementedError):
    """The requested operation has no closed form for this object."""


class ReferenceSolveError(AccelCertError, RuntimeError):
    """The high-accuracy reference solve did not reach its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DivergenceError(AccelCertError, FloatingPointError):
    """A solver produced a non-finite value."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class CertificateSolveError(AccelCertError, RuntimeError):
    """A certificate infimum could not be bracketed."""


class AuditSetupError(AccelCertError, ValueError):
    """An audit was requested with inputs from the wrong regime."""
