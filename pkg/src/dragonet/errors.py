"""Exception types shared across the package."""


class DragonetError(Exception):
    """Base class for all package errors."""


class ShapeError(DragonetError, ValueError):
    pass


class NumericError(DragonetError, ArithmeticError):
    """Raised on non-finite values where finite ones are required."""


class ConfigError(DragonetError, ValueError):
    pass


class DataError(DragonetError, ValueError):
    """Bad input data: unknown labels, malformed rows, empty datasets."""


class HierarchyError(DataError):
    """A (macro, micro) label pair that violates the taxonomy."""


class TaxonomyError(DataError):
    """A taxonomy file that fails validation."""
