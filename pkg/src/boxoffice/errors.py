"""Exception types shared across the package.

The CLI maps these to exit codes: DataError -> 3, NumericError -> 4.
"""


class BoxOfficeError(Exception):
    pass


class DataError(BoxOfficeError):
    """Unreadable, malformed, or inconsistent input data."""


class NumericError(BoxOfficeError):
    """Non-finite losses or other numeric failures during training."""
