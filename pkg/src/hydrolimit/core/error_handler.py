"""
Error handling module for hydrolimit
"""

import functools
import threading
import traceback
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from itertools import count
from typing import Dict, Any, Optional, Callable, List

from .logger import logger


class ErrorSeverity(Enum):
    """Error severity levels"""
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"
    CRITICAL = "critical"


class ErrorCategory(Enum):
    """Error categories"""
    LATTICE = "lattice"
    RATES = "rates"
    SIMULATION = "simulation"
    SOLVER = "solver"
    GEOMETRY = "geometry"
    CONFIGURATION = "configuration"
    CAPACITY = "capacity"
    IO = "io"
    UNKNOWN = "unknown"


class HydroLimitError(Exception):
    """Base class for all hydrolimit errors"""

    category = ErrorCategory.UNKNOWN

    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.context = dict(context or {})


class DomainError(HydroLimitError, ValueError):
    """A precondition on the arguments is violated"""
    category = ErrorCategory.CONFIGURATION


class CapacityError(HydroLimitError):
    """The requested enumeration or state space is too large"""
    category = ErrorCategory.CAPACITY


class InfeasibleRatesError(HydroLimitError):
    """A target reaction polynomial needs negative rate-table entries"""
    category = ErrorCategory.RATES

    def __init__(self, message: str, violations: Dict[str, float],
                 context: Optional[Dict[str, Any]] = None):
        super().__init__(message, context)
        self.violations = dict(violations)


class BracketingError(HydroLimitError):
    """No sign change of the shooting classifier was found"""
    category = ErrorCategory.SOLVER


class DomainSizeError(HydroLimitError):
    """The truncated z-domain is too short for the requested tolerance"""
    category = ErrorCategory.SOLVER


class SolverError(HydroLimitError):
    """Numerical integration left the admissible range"""
    category = ErrorCategory.SOLVER

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message, diagnostics)
        self.diagnostics = dict(diagnostics or {})


class ExtractionError(HydroLimitError):
    """A front could not be located in a field"""
    category = ErrorCategory.GEOMETRY


class AbsorbedError(HydroLimitError):
    """The Markov chain reached a state with zero total rate"""
    category = ErrorCategory.SIMULATION


@dataclass
class ErrorInfo:
    """Error information structure"""
    error_id: str
    timestamp: datetime
    error_type: str
    error_message: str
    severity: ErrorSeverity
    category: ErrorCategory
    context: Dict[str, Any] = field(default_factory=dict)
    stack_trace: Optional[str] = None
    run_id: Optional[str] = None
    step_id: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for serialization"""
        return {
            "error_id": self.error_id,
            "timestamp": self.timestamp.isoformat(),
            "error_type": self.error_type,
            "error_message": self.error_message,
            "severity": self.severity.value,
            "category": self.category.value,
            "context": {k: str(v) for k, v in self.context.items()},
            "stack_trace": self.stack_trace,
            "run_id": self.run_id,
            "step_id": self.step_id,
        }


class ErrorHandler:
    """Central error bookkeeping for hydrolimit"""

    def __init__(self):
        self.error_history: List[ErrorInfo] = []
        self.error_callbacks: List[Callable[[ErrorInfo], None]] = []
        self.lock = threading.Lock()
        self._ids = count(1)

    def handle_error(self, error: Exception, context: Optional[Dict[str, Any]] = None,
                     severity: ErrorSeverity = ErrorSeverity.MEDIUM,
                     category: Optional[ErrorCategory] = None,
                     run_id: Optional[str] = None,
                     step_id: Optional[str] = None) -> ErrorInfo:
        """Record and log an error; the caller decides whether to re-raise"""
        merged = dict(getattr(error, "context", {}) or {})
        merged.update(context or {})
        if category is None:
            category = getattr(error, "category", ErrorCategory.UNKNOWN)

        error_info = ErrorInfo(
            error_id=self._generate_error_id(),
            timestamp=datetime.now(),
            error_type=type(error).__name__,
            error_message=str(error),
            severity=severity,
            category=category,
            context=merged,
            stack_trace=traceback.format_exc() if severity in (ErrorSeverity.HIGH, ErrorSeverity.CRITICAL) else None,
            run_id=run_id,
            step_id=step_id,
        )

        with self.lock:
            self.error_history.append(error_info)

        self._log_error(error_info)
        self._notify_error_callbacks(error_info)
        return error_info

    def register_error_callback(self, callback: Callable[[ErrorInfo], None]):
        """Register error callback"""
        self.error_callbacks.append(callback)

    def get_error_history(self, limit: Optional[int] = None,
                          severity: Optional[ErrorSeverity] = None,
                          category: Optional[ErrorCategory] = None) -> List[ErrorInfo]:
        """Get error history with optional filtering (newest first)"""
        with self.lock:
            errors = self.error_history.copy()
        if severity:
            errors = [e for e in errors if e.severity == severity]
        if category:
            errors = [e for e in errors if e.category == category]
        errors.reverse()
        if limit:
            errors = errors[:limit]
        return errors

    def get_error_stats(self) -> Dict[str, Any]:
        """Get error statistics"""
        with self.lock:
            severity_counts = Counter(e.severity.value for e in self.error_history)
            category_counts = Counter(e.category.value for e in self.error_history)
            return {
                "total_errors": len(self.error_history),
                "severity_counts": {s.value: severity_counts.get(s.value, 0) for s in ErrorSeverity},
                "category_counts": {c.value: category_counts.get(c.value, 0) for c in ErrorCategory},
            }

    def clear_error_history(self):
        """Clear error history"""
        with self.lock:
            self.error_history.clear()

    def _log_error(self, error_info: ErrorInfo):
        """Log error with appropriate level"""
        log_message = f"Error [{error_info.error_id}]: {error_info.error_type} - {error_info.error_message}"
        if error_info.context:
            log_message += f" - Context: {error_info.context}"

        if error_info.severity == ErrorSeverity.CRITICAL:
            logger.critical(log_message)
        elif error_info.severity == ErrorSeverity.HIGH:
            logger.error(log_message)
        elif error_info.severity == ErrorSeverity.MEDIUM:
            logger.warning(log_message)
        else:
            logger.info(log_message)

        if error_info.stack_trace and error_info.severity == ErrorSeverity.CRITICAL:
            logger.debug(f"Stack trace for error {error_info.error_id}:\n{error_info.stack_trace}")

    def _notify_error_callbacks(self, error_info: ErrorInfo):
        for callback in self.error_callbacks:
            try:
                callback(error_info)
            except Exception as e:
                logger.error(f"Error callback failed: {e}")

    def _generate_error_id(self) -> str:
        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        return f"ERR_{timestamp}_{next(self._ids):04d}"


# Global error handler instance
error_handler = ErrorHandler()


def handle_exceptions(severity: ErrorSeverity = ErrorSeverity.MEDIUM,
                      category: Optional[ErrorCategory] = None):
    """Decorator: record exceptions with the error handler, then re-raise"""
    def decorator(func):
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            try:
                return func(*args, **kwargs)
            except Exception as e:
                context = {
                    "function": func.__name__,
                    "module": func.__module__,
                    "args_count": len(args),
                    "kwargs_keys": list(kwargs.keys())
                }
                error_handler.handle_error(
                    error=e,
                    context=context,
                    severity=severity,
                    category=category,
                )
                raise
        return wrapper
    return decorator
