"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericalError -> 4. Plain ValueError from argument validation is treated
like DataError at the CLI boundary.
"""


class ZslError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(ZslError):
    """Invalid or inconsistent run configuration."""


class DataError(ZslError):
    """Malformed, missing, or degenerate input data."""


class NumericalError(ZslError):
    """Numerical failure: non-convergence, singular matrices, collapse."""
