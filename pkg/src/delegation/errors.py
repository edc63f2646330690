"""Exception hierarchy shared by all modules."""


class DelegationError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(DelegationError):
    """Problem primitives or configuration failed validation."""


class DomainError(DelegationError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConstructionError(DelegationError, ValueError):
    """A grid, instance or curve could not be built from the given inputs."""


class PreconditionError(DelegationError):
    """A mathematical hypothesis required by a certificate does not hold."""


class UnsupportedRegionError(DelegationError):
    """A pooling region is neither a singleton nor contained in a line."""


class SolverError(DelegationError):
    """An iterative solver failed to converge.

    Attributes:
        residual: last residual reached before giving up (may be None).
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual
