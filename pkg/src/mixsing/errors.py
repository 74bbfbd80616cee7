"""
Exception hierarchy and error logging.
"""
import logging
from typing import Any, Dict


class Severity:
    """Severity attached to every toolkit error."""
    ERROR = "error"
    WARNING = "warning"
    INFO = "info"


class MixsingError(Exception):
    """Base class of all toolkit errors."""
    code = "MixsingError"
    severity = Severity.ERROR


class DuplicateAtoms(MixsingError):
    code = "DuplicateAtoms"


class BadWeights(MixsingError):
    code = "BadWeights"


class MixedFamilies(MixsingError):
    code = "MixedFamilies"


class IndexMismatch(MixsingError):
    code = "IndexMismatch"


class DomainError(MixsingError):
    code = "DomainError"


class OrderTooHigh(MixsingError):
    code = "OrderTooHigh"


class PoleAtZeroShape(MixsingError):
    code = "PoleAtZeroShape"


class SupportTooLarge(MixsingError):
    code = "SupportTooLarge"


class NotS0(MixsingError):
    code = "NotS0"


class BadParams(MixsingError):
    code = "BadParams"


class NotApplicable(MixsingError):
    code = "NotApplicable"
    severity = Severity.WARNING


class LabelMismatch(MixsingError):
    code = "LabelMismatch"


class GridTooCoarse(MixsingError):
    code = "GridTooCoarse"


class QuadratureFailure(MixsingError):
    code = "QuadratureFailure"


class NoConvergedStart(MixsingError):
    code = "NoConvergedStart"
    severity = Severity.WARNING


class DegenerateRegression(MixsingError):
    code = "DegenerateRegression"


class TransportFailure(MixsingError):
    code = "TransportFailure"


class UsageError(MixsingError):
    """Malformed command line."""
    code = "UsageError"


def log_error(error: BaseException) -> None:
    """
    Logs an error to the logging framework at a level matching its severity.

    Args:
        error: Any exception; toolkit errors carry a code and a severity
    """
    try:
        code = getattr(error, "code", type(error).__name__)
        severity = getattr(error, "severity", Severity.ERROR)

        if severity == Severity.ERROR:
            log_level = logging.ERROR
        elif severity == Severity.WARNING:
            log_level = logging.WARNING
        else:
            log_level = logging.INFO

        logging.log(log_level, "mixsing error: code=%s, message='%s'", code, error)
    except Exception as e:
        logging.error(f"Error in error handler: {e}")


def error_payload(error: BaseException) -> Dict[str, Any]:
    """
    Machine-readable description of an error, written to stderr by the CLI.
    """
    return {
        "error": getattr(error, "code", type(error).__name__),
        "message": str(error),
    }
