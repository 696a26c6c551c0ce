"""Exception hierarchy shared by all modules."""


class FastRootError(Exception):
    """Base class for every error raised by this package."""


class DomainError(FastRootError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class PreconditionError(FastRootError, ValueError):
    """A documented precondition of an operation was violated."""


class SolverError(FastRootError, RuntimeError):
    """An iterative solver failed to converge.

    ``best`` carries the last (best) iterate so callers can inspect it.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ComparisonMismatch(FastRootError):
    """A measured error disagrees with its published value."""
