"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericError -> 4. Everything else is a plain bug and propagates.
"""


class FairmtlError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(FairmtlError):
    """Invalid or inconsistent run configuration."""


class DataError(FairmtlError):
    """Malformed, missing, or degenerate input data."""


class ShapeError(FairmtlError):
    """Array dimensions do not match the declared layer/feature sizes."""


class NumericError(FairmtlError):
    """Non-finite values where finite ones are required."""


class ContractError(FairmtlError):
    """API misuse, e.g. a backward pass fed a stale forward cache."""


class UndefinedMetricError(FairmtlError):
    """A fairness rate has an empty denominator and is undefined."""


class LeakageError(FairmtlError):
    """Protected labels were touched where only features are allowed."""
