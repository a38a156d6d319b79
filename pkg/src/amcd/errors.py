"""Semantic exception hierarchy shared across the package."""


class AmcdError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(AmcdError, ValueError):
    """An input violates a documented precondition."""


class NegativeEntryError(ValidationError):
    """A probability vector or distortion matrix contains a negative entry."""


class SumNotOneError(ValidationError):
    """A distribution does not sum to one within tolerance."""


class SupportMismatchError(ValidationError):
    """p puts mass on a symbol where q vanishes; the divergence is infinite."""


class DimensionMismatchError(ValidationError):
    """Operands have incompatible alphabet sizes."""


class DomainError(ValidationError):
    """A scalar argument lies outside its admissible domain."""


class DegenerateDensityError(ValidationError):
    """Every discretized mass underflowed to zero."""


class MissingDistortionError(ValidationError):
    """No distortion matrix was supplied and built-in defaults are disabled."""


class AlphabetTooLargeError(ValidationError):
    """Brute-force enumeration refused: the alphabet is too large."""


class DegenerateDenominatorError(AmcdError):
    """A row denominator underflowed even in log-domain evaluation."""


class BisectionFailureError(AmcdError):
    """No slope bracket could be established within the search cap."""
