"""Exception hierarchy.

Every error raised on purpose by this package derives from
:class:`MFGError`, so callers (the CLI in particular) can map them onto
stable exit codes.
"""


class MFGError(Exception):
    """Base class for all package errors."""


class ModelError(MFGError, ValueError):
    """Malformed model input.

    ``path`` names the offending location in the model document, e.g.
    ``kernel.p0[1][0]``.
    """

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class NegativeEntry(MFGError, ValueError):
    """The minorization measure exceeds a kernel row at runtime."""


class MaxIterExceeded(MFGError, RuntimeError):
    """An iterative solver ran out of budget before reaching tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        self.residual = residual
        self.iterations = iterations
        super().__init__(message)


class NonConvergence(MFGError, RuntimeError):
    """A fixed-point loop failed to converge.

    ``trace`` holds the residual history and ``best`` the best iterate
    found (when one exists).
    """

    def __init__(self, message, trace=None, best=None):
        self.trace = [] if trace is None else list(trace)
        self.best = best
        super().__init__(message)


class TooLarge(MFGError, ValueError):
    """Exhaustive enumeration would exceed the configured bound."""


class KernelCoupled(MFGError, ValueError):
    """Operation requires a transition kernel that does not depend on the
    population measure."""


class InconsistentInput(MFGError, ValueError):
    """Inputs violate a consistency precondition (e.g. mu is not the
    invariant measure of the given policy)."""
