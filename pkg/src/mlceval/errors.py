"""Exception hierarchy shared across the package."""

from __future__ import annotations


class MLCEvalError(Exception):
    """Base class for all package errors."""


class ValidationError(MLCEvalError, ValueError):
    """Input data or configuration failed validation."""


class SchemaError(ValidationError):
    pass


class CodeParseError(ValidationError):
    """A label-set code or pattern could not be parsed.

    ``position`` is the 0-based token index that failed, or None when the
    problem is global (empty input, wrong arity).
    """

    def __init__(self, message: str, text: str = "", position: int | None = None):
        super().__init__(message)
        self.text = text
        self.position = position


class DatasetError(ValidationError):
    """Malformed corpus or prediction records.

    ``line`` is the 1-based line number in the source stream, when known.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class AlignmentError(ValidationError):
    def __init__(self, message: str, ids: list[str] | None = None):
        super().__init__(message)
        self.ids = list(ids or [])


class FixtureError(ValidationError):
    pass


class BackendError(MLCEvalError):
    """The prediction backend could not be reached or misbehaved."""
