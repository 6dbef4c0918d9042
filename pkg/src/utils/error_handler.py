"""
Error Handling Module

Maps engine exceptions to CLI exit codes and API error responses, and lets a
long-running sweep record a failing sub-run and continue.
"""

import traceback
from typing import Any, Dict, Optional

from core.exceptions import ConfigError, DataError, NumericError, QuantFewShotError, ReportNotFoundError
from utils.logger import logger


# HTTP status per error family
HTTP_STATUS = {
    ReportNotFoundError: 404,
    ConfigError: 400,
    DataError: 422,
    NumericError: 500,
}


def exit_code_for(error: BaseException) -> int:
    """Process exit code: 2 config, 3 data, 4 numeric, 1 anything else."""
    if isinstance(error, QuantFewShotError):
        return error.exit_code
    return 1


def http_status_for(error: BaseException) -> int:
    for error_type, status in HTTP_STATUS.items():
        if isinstance(error, error_type):
            return status
    return 500


class ErrorHandler:
    """Context manager for error handling."""

    def __init__(self, operation: str, fallback: Any = None, raise_on_error: bool = False):
        self.operation = operation
        self.fallback = fallback
        self.raise_on_error = raise_on_error
        self.error: Optional[BaseException] = None

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        if exc_type is not None:
            if not issubclass(exc_type, Exception):
                return False
            self.error = exc_val
            logger.error(f"[ERROR] {self.operation}: {exc_val}")
            logger.debug(traceback.format_exc())

            if self.raise_on_error:
                return False  # Re-raise exception

            return True  # Suppress exception
        return False

    @property
    def message(self) -> Optional[str]:
        """'ErrorClass: message' of the suppressed error, if any."""
        if self.error is None:
            return None
        return f"{type(self.error).__name__}: {self.error}"


def format_error_response(error: Exception, request_id: Optional[str] = None) -> Dict[str, Any]:
    """
    Format error as API / CLI JSON response.

    Args:
        error: Exception that occurred
        request_id: Optional request ID for tracking

    Returns:
        Formatted error response dictionary
    """
    if isinstance(error, QuantFewShotError):
        return {
            'status': 'error',
            'error_code': error.__class__.__name__,
            'error_message': str(error),
            'exit_code': error.exit_code,
            'request_id': request_id
        }

    # Generic error
    return {
        'status': 'error',
        'error_code': 'InternalError',
        'error_message': 'An unexpected error occurred',
        'exit_code': 1,
        'request_id': request_id
    }
