"""Exception types shared across the package."""


class NpivError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(NpivError, ValueError):
    """A spec, plan, or option is internally inconsistent."""


class DomainError(NpivError, ValueError):
    """Evaluation point lies outside the unit cube."""


class InvalidDimensionError(NpivError, ValueError):
    """Sieve dimension is not on the admissible grid, or the grid is empty."""


class UnsupportedDerivativeError(NpivError, ValueError):
    """Requested derivative order exceeds the smoothness of the basis."""


class DegenerateColumnError(NpivError, ValueError):
    """A data column is constant or otherwise unusable for a transform."""


class InsufficientSampleError(NpivError, ValueError):
    """Sample size is too small for the requested instrument dimension."""


class DegenerateVarianceError(NpivError, RuntimeError):
    """Estimated sieve variance collapses; bands are undefined."""


class InvalidSmoothnessError(NpivError, ValueError):
    """Smoothness lower bound is incompatible with the derivative order."""


class DataError(NpivError, ValueError):
    """Input data file cannot be parsed or has unusable values."""
