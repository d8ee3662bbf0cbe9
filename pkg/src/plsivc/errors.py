"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: DataError -> 2, NumericalError -> 3.
"""


class DataError(ValueError):
    """Bad or insufficient input data."""


class SchemaError(DataError):
    """Input file does not match the expected column schema."""


class InsufficientDataError(DataError):
    """Too few rows to fit the requested model."""


class NumericalError(RuntimeError):
    """Numerical failure during fitting."""


class SingularDesignError(NumericalError):
    """Normal equations stayed singular even after ridge jitter."""
