"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class AnisoError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(AnisoError, ValueError):
    """A configuration document or argument is malformed."""


class GridFormatError(AnisoError, ValueError):
    """A grid file could not be parsed."""


class SingularMatrixError(AnisoError, ArithmeticError):
    """A cover matrix is (numerically) singular."""


class OutOfRangeError(AnisoError, ValueError):
    """A cover was evaluated outside its declared validity region."""


class DimensionMismatchError(AnisoError, ValueError):
    pass


class OrderExceededError(AnisoError, ValueError):
    """A derivative was requested beyond the kernel's supported order."""


class SeminormTruncationError(AnisoError, RuntimeError):
    """The weighted integrand is not negligible at the search-box boundary."""


class SmallDivisorError(AnisoError, ArithmeticError):
    """The Fourier-side divisor fell below the safety margin."""

    def __init__(self, message: str, witness=None):
        super().__init__(message)
        self.witness = witness


class CoverSearchError(AnisoError, RuntimeError):
    """No admissible dilation step or equivalence constant was found."""


class PreconditionError(AnisoError, ValueError):
    """An operation was called outside its stated precondition."""
