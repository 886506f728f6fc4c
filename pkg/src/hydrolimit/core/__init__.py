"""
Core modules for hydrolimit
"""

from .config import settings, Settings, load_settings
from .logger import logger, get_logger
from .error_handler import (
    error_handler, ErrorSeverity, ErrorCategory, HydroLimitError, DomainError,
    CapacityError, InfeasibleRatesError, BracketingError, DomainSizeError,
    SolverError, ExtractionError, AbsorbedError,
)
from .progress_manager import progress_manager, ExperimentStep, StepStatus
from .artifact_store import ArtifactStore

__all__ = [
    "settings", "Settings", "load_settings",
    "logger", "get_logger",
    "error_handler", "ErrorSeverity", "ErrorCategory", "HydroLimitError", "DomainError",
    "CapacityError", "InfeasibleRatesError", "BracketingError", "DomainSizeError",
    "SolverError", "ExtractionError", "AbsorbedError",
    "progress_manager", "ExperimentStep", "StepStatus",
    "ArtifactStore",
]
