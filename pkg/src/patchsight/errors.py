"""Exception types shared across the package."""


class PatchsightError(Exception):
    """Base class for all package-specific errors."""


class DecodeError(PatchsightError):
    """Raised when image bytes cannot be decoded."""


class UnsupportedFormatError(PatchsightError):
    """Raised for image formats outside the supported 8-bit PNG subset."""


class DimensionMismatchError(PatchsightError, ValueError):
    """Raised when an array shape does not match what an operation expects."""


class InsufficientDataError(PatchsightError, ValueError):
    """Raised when too few samples are supplied to fit or calibrate."""


class UndefinedMetricError(PatchsightError):
    """Raised when a metric is undefined for the given inputs (e.g. single-class AUROC)."""


class NumericError(PatchsightError, ArithmeticError):
    """Raised when a numerical routine fails despite valid inputs."""


class MissingEmbeddingError(PatchsightError, KeyError):
    """Raised when an imported-embeddings file has no entry for an image."""


class FramingError(PatchsightError):
    """Raised for structurally invalid container bytes (bad magic, truncation)."""


class CorruptModelError(PatchsightError):
    """Raised when a container's CRC32 check fails."""


class UnsupportedModelError(PatchsightError):
    """Raised for container versions or algorithm ids this build does not know."""
