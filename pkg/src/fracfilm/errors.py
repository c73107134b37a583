"""Exception types shared across the package."""


class FracfilmError(Exception):
    """Base class for package-specific failures."""


class GridMismatchError(FracfilmError, ValueError):
    """Operands live on different grids or have the wrong shape."""


class ConvergenceError(FracfilmError, RuntimeError):
    """An iterative solver did not reach its tolerance.

    Carries the last measured marginal error so callers can decide whether
    the partial result is usable.
    """

    def __init__(self, message, marginal_error=None):
        super().__init__(message)
        self.marginal_error = marginal_error


class StagnationError(FracfilmError, RuntimeError):
    """Backtracking found no descent step above the minimum step size.

    Carries the last iterate for post-mortem inspection.
    """

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class MassDriftError(FracfilmError, RuntimeError):
    """A push-forward lost or gained more mass than the hard threshold."""

    def __init__(self, message, drift=None):
        super().__init__(message)
        self.drift = drift
