"""Exception hierarchy shared by every module."""


class KFusionError(Exception):
    """Base class for all package errors."""


class ValidationError(KFusionError, ValueError):
    """Malformed input: non-finite entries, bad shapes, non-positive weights."""


class PreconditionError(KFusionError, ValueError):
    """A theorem hypothesis does not hold for the supplied data."""


class NotAKFrameError(PreconditionError):
    """The frame operator is not injective on the range of K."""


class DiagnosticError(KFusionError, RuntimeError):
    """Two routes that must agree did not (rank/tolerance bug, never user error)."""
