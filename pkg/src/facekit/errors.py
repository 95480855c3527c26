"""Exception hierarchy shared by every facekit module."""


class FaceKitError(Exception):
    """Base class for all facekit errors."""


class ValidationError(FaceKitError, ValueError):
    """Input violates a documented invariant or precondition."""


class DimensionError(ValidationError):
    """Array shapes or parameter counts do not agree."""


class NormalizationStateError(ValidationError):
    """A parameter vector is in the wrong normalized/raw state."""


class FormatError(ValidationError):
    """A file could not be parsed into a valid object."""


class UnsupportedVersionError(FormatError):
    pass


class TruncatedFileError(FormatError):
    pass


class NumericalError(FaceKitError, ArithmeticError):
    """A numerical procedure failed (singular system, non-finite value)."""


class SingularSystemError(NumericalError):
    """A linear system is rank deficient.

    ``partial`` optionally carries a minimum-norm solution and ``null_space``
    the unconstrained directions, so callers can inspect what was recoverable.
    """

    def __init__(self, message, partial=None, null_space=None):
        super().__init__(message)
        self.partial = partial
        self.null_space = null_space
