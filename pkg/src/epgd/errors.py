"""Exception hierarchy shared across the package."""


class EpgdError(Exception):
    """Base class for all errors raised by :mod:`epgd`."""


class ImageFormatError(EpgdError, ValueError):
    """Unreadable or unsupported image file."""


class DimensionError(EpgdError, ValueError):
    """Array shapes or image sizes are incompatible."""


class CoverageError(EpgdError, RuntimeError):
    """A pixel of the output canvas received no patch during aggregation."""


class DegenerateClusterError(EpgdError, ValueError):
    """Mixture training cannot produce K non-degenerate components."""


class DataCorruptionError(EpgdError, ValueError):
    """A covariance matrix violates symmetry beyond tolerance."""


class NumericalFailureError(EpgdError, ArithmeticError):
    """A constrained update failed to satisfy its constraints."""


class PriorFormatError(EpgdError, ValueError):
    """Prior file has the wrong magic, version, or contains non-finite values."""


class PriorTruncatedError(PriorFormatError):
    """Prior file ends before all declared fields were read."""
