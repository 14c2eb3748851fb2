"""Exception and warning types shared across the package."""


class FracBVError(Exception):
    """Base class for library errors."""


class InvalidArgument(FracBVError, ValueError):
    """An argument violates a documented precondition."""


class Unsupported(FracBVError, NotImplementedError):
    """The requested configuration is outside what the discretization supports."""


class CalibrationFailure(FracBVError, RuntimeError):
    """Kernel constants could not be validated against the spectral reference."""


class ResolutionFailure(FracBVError, RuntimeError):
    """A target accuracy cannot be reached on the current grid.

    The best distance reached is kept in ``achieved``.
    """

    def __init__(self, message: str, achieved: float = float("nan")):
        super().__init__(message)
        self.achieved = achieved


class ParseError(FracBVError, ValueError):
    """Malformed input file. ``offset`` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int = -1):
        if offset >= 0:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class TruncationWarning(UserWarning):
    """The analytic tail outside the grid box exceeds the configured bound."""
