"""Exception and warning types shared across the package."""


class FairFedError(Exception):
    """Base class for all package errors."""


class DomainError(FairFedError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class RangeError(FairFedError, ValueError):
    """A target value is outside the range of a monotone map."""


class UnsupportedError(FairFedError, ValueError):
    """The requested configuration is not covered by the analytic solver."""


class SolverError(FairFedError, RuntimeError):
    """The LP routine failed to terminate or found an unbounded direction."""


class DegenerateGroupError(FairFedError, ValueError):
    """A sensitive group has no samples."""


class MissingGroupError(FairFedError, ValueError):
    """A group required by the protocol is absent from every client."""


class DimensionError(FairFedError, ValueError):
    """Parameter or feature dimensions do not match."""


class LengthMismatchError(FairFedError, ValueError):
    """Vectors that must share a length do not."""


class CovarianceError(FairFedError, ValueError):
    """A covariance matrix is not symmetric positive definite."""


class EmptyClientError(FairFedError, ValueError):
    """A client received no samples."""


class ParseError(FairFedError, ValueError):
    """A CSV file could not be parsed."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.row = row
        self.column = column


class UnknownCategoryError(FairFedError, ValueError):
    """A categorical value was not seen when the preprocessor was fitted."""


class DegenerateSplitError(FairFedError, ValueError):
    """A random split could not place every sensitive group in both parts."""


class MissingSummaryError(FairFedError, FileNotFoundError):
    """A run directory has no summary file."""


class ConfigError(FairFedError, ValueError):
    """An experiment configuration is invalid."""


class ClipWarning(UserWarning):
    """A threshold argument left the open unit interval and was saturated."""
