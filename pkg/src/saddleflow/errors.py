"""Exception hierarchy shared by all modules."""


class SaddleFlowError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(SaddleFlowError, ValueError):
    """Vector or matrix shapes do not agree."""


class ConfigurationError(SaddleFlowError, ValueError):
    """A set, problem or run description is invalid (e.g. an empty box)."""


class PreconditionError(SaddleFlowError, ValueError):
    """An operation was called outside its domain."""


class ProjectionError(SaddleFlowError, RuntimeError):
    """A projection subproblem could not be solved and certified."""


class ConsistencyError(SaddleFlowError, RuntimeError):
    """A computed quantity contradicts a guaranteed property (signals a bug)."""


class UnsupportedError(SaddleFlowError, NotImplementedError):
    """The requested analysis does not apply to this problem class."""
