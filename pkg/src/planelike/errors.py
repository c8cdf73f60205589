"""Exception types shared across modules."""


class PlanelikeError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for it."""
    exit_code = 1


class ValidationError(PlanelikeError, ValueError):
    exit_code = 2


class DomainError(PlanelikeError, ValueError):
    exit_code = 2


class PreconditionError(PlanelikeError, ValueError):
    exit_code = 2


class AlignmentError(PreconditionError):
    pass


class MarginError(PreconditionError):
    pass


class NonAdmissibleKernel(PreconditionError):
    pass


class QuadratureError(PlanelikeError, RuntimeError):
    def __init__(self, msg, bracket=None):
        super().__init__(msg)
        self.bracket = bracket


class ResourceError(PlanelikeError, MemoryError):
    """Desk-scale guard tripped (too many offsets, too large a window, ...)."""
    exit_code = 4


class CapacityOverflow(ResourceError):
    pass
