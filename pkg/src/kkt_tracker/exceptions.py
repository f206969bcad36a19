"""Exception hierarchy shared by all modules."""


class KKTTrackerError(Exception):
    """Base class for errors raised by this package."""


class InvalidInputError(KKTTrackerError, ValueError):
    """Malformed or non-finite input."""


class PreconditionError(KKTTrackerError, ValueError):
    """An operation was called outside its documented domain."""


class OracleError(KKTTrackerError, FloatingPointError):
    """A problem callback returned non-finite values."""


class DivergenceError(KKTTrackerError, FloatingPointError):
    """The primal-dual iteration produced non-finite or runaway iterates."""

    def __init__(self, message, tau=None, component=None):
        super().__init__(message)
        self.tau = tau
        self.component = component


class NoConvergenceError(KKTTrackerError, RuntimeError):
    """The KKT fixed-point solve did not reach the requested tolerance."""

    def __init__(self, message, best_residual, iterations, best=None, tau=None):
        super().__init__(message)
        self.best_residual = best_residual
        self.iterations = iterations
        self.best = best
        self.tau = tau


class BoundNotApplicableError(KKTTrackerError, ValueError):
    """A tracking bound was requested where its hypotheses fail."""


class DomainError(KKTTrackerError, ValueError):
    """Argument outside the domain of a scalar function."""
