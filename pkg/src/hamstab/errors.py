"""Exception types raised across the package."""


class HamstabError(Exception):
    """Base class for all package errors."""


class DomainError(HamstabError, ValueError):
    """A state or field value is non-finite or otherwise outside the domain."""


class ExprError(HamstabError, ValueError):
    """Invalid expression text or an unbound identifier."""

    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class IntegrationError(HamstabError, RuntimeError):
    """The ODE integrator could not complete the requested run."""


class NoCrossingError(IntegrationError):
    """Fewer section crossings than requested were found."""


class ProjectionError(HamstabError, RuntimeError):
    """Gauss-Newton projection onto a level set failed."""


class OrbitError(HamstabError, RuntimeError):
    """A periodic orbit could not be found or certified."""
