"""Custom error classes and error rendering utilities."""
from typing import Any, Dict, Optional

import click
from loguru import logger

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_DIVERGED = 2


class NoiseModelError(Exception):
    """Base class for srgbnoise errors."""

    def __init__(
        self,
        message: str,
        exit_code: int = EXIT_VALIDATION,
        error_code: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None,
    ):
        """
        Initialize error.

        Args:
            message: Human-readable error message
            exit_code: Process exit code used by the CLI
            error_code: Machine-readable error code
            details: Additional error details
        """
        super().__init__(message)
        self.message = message
        self.exit_code = exit_code
        self.error_code = error_code or self.__class__.__name__.upper()
        self.details = details or {}

    def to_dict(self) -> Dict[str, Any]:
        """Convert error to dictionary format."""
        return {"error": self.error_code, "message": self.message, "details": self.details}


class ValidationError(NoiseModelError):
    """Input or invariant violation."""

    def __init__(self, message: str, details: Optional[Dict] = None):
        super().__init__(message, error_code="VALIDATION_ERROR", details=details)


class NotFoundError(NoiseModelError):
    """Missing file or resource."""

    def __init__(self, message: str = "Resource not found", path: Optional[str] = None):
        details = {"path": str(path)} if path else {}
        super().__init__(message, error_code="NOT_FOUND", details=details)


class ParseError(NoiseModelError):
    """Malformed text input; `row` is 1-based."""

    def __init__(self, message: str, row: Optional[int] = None):
        self.row = row
        details = {"row": row} if row is not None else {}
        super().__init__(message, error_code="PARSE_ERROR", details=details)


class FormatError(NoiseModelError):
    """Image data in an unsupported format."""

    def __init__(self, message: str, details: Optional[Dict] = None):
        super().__init__(message, error_code="FORMAT_ERROR", details=details)


class InsufficientDataError(NoiseModelError):
    """Not enough samples for a statistical estimate."""

    def __init__(self, message: str, details: Optional[Dict] = None):
        super().__init__(message, error_code="INSUFFICIENT_DATA", details=details)


class FitError(NoiseModelError):
    """Degenerate regression problem."""

    def __init__(self, message: str, details: Optional[Dict] = None):
        super().__init__(message, error_code="FIT_ERROR", details=details)


class UnknownConditionError(NoiseModelError):
    """Camera or ISO index/name outside the registry."""

    def __init__(self, message: str, details: Optional[Dict] = None):
        super().__init__(message, error_code="UNKNOWN_CONDITION", details=details)


class ConfigurationError(NoiseModelError):
    """Invalid configuration or checkpoint/model mismatch."""

    def __init__(self, message: str, details: Optional[Dict] = None):
        super().__init__(message, error_code="CONFIGURATION_ERROR", details=details)


class NumericalError(NoiseModelError):
    """Non-finite values in a computation."""

    def __init__(self, message: str, details: Optional[Dict] = None):
        super().__init__(
            message, exit_code=EXIT_DIVERGED, error_code="NUMERICAL_ERROR", details=details
        )


class DivergedError(NumericalError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, last_checkpoint: Optional[str] = None):
        super().__init__(message, details={"last_checkpoint": last_checkpoint})
        self.error_code = "DIVERGED"
        self.last_checkpoint = last_checkpoint


class InternalError(NoiseModelError):
    """Unexpected failure outside the srgbnoise error hierarchy."""

    def __init__(self, message: str, details: Optional[Dict] = None):
        super().__init__(message, error_code="INTERNAL_ERROR", details=details)


def render_error(error: NoiseModelError) -> int:
    """
    Log an error and print an actionable message to stderr.

    Args:
        error: Raised srgbnoise error

    Returns:
        Process exit code for the error family
    """
    logger.bind(error_code=error.error_code, **error.details).error(error.message)
    hint = ""
    if isinstance(error, DivergedError) and error.last_checkpoint:
        hint = f" (last good checkpoint: {error.last_checkpoint})"
    elif error.details:
        hint = " (" + ", ".join(f"{k}={v}" for k, v in error.details.items()) + ")"
    click.echo(f"✗ {error.error_code}: {error.message}{hint}", err=True)
    return error.exit_code
