"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands have incompatible or invalid dimensions."""


class NumericError(ValueError):
    """A value that must be finite is NaN or infinite."""


class UnsupportedDimensionError(ValueError):
    """Requested dimension exceeds what the generator supports."""


class UnsupportedActivationError(ValueError):
    """The requested activation lacks a derivative needed by the caller."""


class SolverDivergence(RuntimeError):
    """An iterative solver produced a non-finite loss and was aborted."""

    def __init__(self, message, iteration=None, block=None):
        super().__init__(message)
        self.iteration = iteration
        self.block = block
