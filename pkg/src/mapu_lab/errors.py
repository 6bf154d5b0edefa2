"""Exception hierarchy. Every error carries the exit code the CLI reports for it."""

from __future__ import annotations

from mapu_lab._exit_codes import ERROR, IO_ERROR, NUMERICAL_ERROR, SCHEMA_ERROR


class MapuError(Exception):
    """Base error for the package."""

    default_exit_code = ERROR

    def __init__(self, message: str, exit_code: int | None = None) -> None:
        super().__init__(message)
        self.exit_code = self.default_exit_code if exit_code is None else exit_code


class SchemaError(MapuError):
    """Configuration failed validation."""

    default_exit_code = SCHEMA_ERROR


class DataFormatError(MapuError):
    """A dataset or checkpoint file is malformed."""

    default_exit_code = IO_ERROR


class NumericalError(MapuError):
    """A non-finite value appeared where finite values are required."""

    default_exit_code = NUMERICAL_ERROR


class ShapeError(MapuError, ValueError):
    """Tensor or array extents do not agree."""


class DomainError(MapuError, ValueError):
    """A function was evaluated outside its domain."""


class StaleTapeError(MapuError):
    """A tensor refers to a tape that has since been cleared."""
