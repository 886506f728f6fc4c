"""
Logging system module for hydrolimit
"""

import logging
import sys
from pathlib import Path
from datetime import datetime
from typing import Optional, Dict, Any, Union
from logging.handlers import RotatingFileHandler

from .config import settings


class ColoredFormatter(logging.Formatter):
    """Colored formatter for console output"""

    # ANSI color codes
    COLORS = {
        'DEBUG': '\033[36m',    # Cyan
        'INFO': '\033[32m',     # Green
        'WARNING': '\033[33m',  # Yellow
        'ERROR': '\033[31m',    # Red
        'CRITICAL': '\033[35m', # Magenta
        'RESET': '\033[0m'
    }

    def __init__(self, fmt: Optional[str] = None, datefmt: Optional[str] = None,
                 use_colors: bool = True):
        super().__init__(fmt or '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
                         datefmt=datefmt)
        self.use_colors = use_colors

    def format(self, record):
        levelname = record.levelname
        if self.use_colors and levelname in self.COLORS:
            record.levelname = f"{self.COLORS[levelname]}{levelname}{self.COLORS['RESET']}"
        try:
            return super().format(record)
        finally:
            record.levelname = levelname


def setup_logger(name: str = "hydrolimit", log_file: Optional[Union[str, Path]] = None,
                 level: str = "INFO", console: bool = True) -> logging.Logger:
    """Create a configured standard logger (console + optional rotating file)"""
    log = logging.getLogger(name)
    log.setLevel(getattr(logging, level.upper(), logging.INFO))
    log.handlers.clear()
    log.propagate = False

    if console:
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(logging.INFO)
        console_handler.setFormatter(ColoredFormatter(datefmt='%H:%M:%S',
                                                      use_colors=sys.stderr.isatty()))
        log.addHandler(console_handler)

    if log_file is not None:
        log_file = Path(log_file)
        log_file.parent.mkdir(parents=True, exist_ok=True)
        file_handler = RotatingFileHandler(log_file, maxBytes=10 * 1024 * 1024,
                                           backupCount=5, encoding='utf-8')
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(filename)s:%(lineno)d - %(funcName)s() - %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        ))
        log.addHandler(file_handler)

    return log


class HydroLimitLogger:
    """Main logger class for hydrolimit"""

    def __init__(self):
        self.logger = logging.getLogger("hydrolimit")
        self.logger.setLevel(getattr(logging, settings.log_level, logging.INFO))
        self.logger.handlers.clear()

        self._setup_console_handler()
        self._setup_file_handlers()

        self.logger.propagate = False

    def _setup_console_handler(self):
        """Setup console handler with colored output"""
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(logging.INFO)
        console_handler.setFormatter(ColoredFormatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
            datefmt='%H:%M:%S',
            use_colors=sys.stderr.isatty()
        ))
        self.logger.addHandler(console_handler)

    def _setup_file_handlers(self):
        """Setup rotating run log and a separate error log"""
        log_path = settings.get_log_path()
        try:
            log_path.parent.mkdir(parents=True, exist_ok=True)
        except OSError:
            # read-only home: console logging only
            return

        file_handler = RotatingFileHandler(
            log_path,
            maxBytes=10 * 1024 * 1024,
            backupCount=5,
            encoding='utf-8'
        )
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(filename)s:%(lineno)d - %(funcName)s() - %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        ))
        self.logger.addHandler(file_handler)

        error_log_path = log_path.parent / f"error_{datetime.now().strftime('%Y%m%d')}.log"
        error_handler = RotatingFileHandler(
            error_log_path,
            maxBytes=5 * 1024 * 1024,
            backupCount=3,
            encoding='utf-8'
        )
        error_handler.setLevel(logging.ERROR)
        error_handler.setFormatter(logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(filename)s:%(lineno)d - %(funcName)s() - %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        ))
        self.logger.addHandler(error_handler)

    def debug(self, message: str, **kwargs):
        self.logger.debug(message, **kwargs)

    def info(self, message: str, **kwargs):
        self.logger.info(message, **kwargs)

    def warning(self, message: str, **kwargs):
        self.logger.warning(message, **kwargs)

    def error(self, message: str, **kwargs):
        self.logger.error(message, **kwargs)

    def critical(self, message: str, **kwargs):
        self.logger.critical(message, **kwargs)

    def exception(self, message: str, **kwargs):
        self.logger.exception(message, **kwargs)

    def log_experiment_step(self, step_name: str, status: str, details: Optional[Dict[str, Any]] = None):
        """Log an experiment pipeline step with structured data"""
        message = f"Step: {step_name} - Status: {status}"
        if details:
            message += f" - Details: {details}"
        self.info(message)

    def log_performance(self, operation: str, duration: float, **kwargs):
        """Log performance metrics"""
        message = f"Performance: {operation} took {duration:.2f}s"
        if kwargs:
            message += f" - {kwargs}"
        self.info(message)

    def log_file_operation(self, operation: str, file_path: str, size: Optional[int] = None, **kwargs):
        """Log file operations"""
        message = f"File Operation: {operation} - {file_path}"
        if size:
            message += f" - Size: {size} bytes"
        if kwargs:
            message += f" - {kwargs}"
        self.debug(message)

    def log_error_with_context(self, error: Exception, context: Dict[str, Any]):
        """Log error with context information"""
        error_info = {
            "error_type": type(error).__name__,
            "error_message": str(error),
            "context": context
        }
        self.error(f"Error occurred: {error_info}")

    def set_level(self, level: str):
        """Set logging level"""
        numeric_level = getattr(logging, level.upper(), None)
        if isinstance(numeric_level, int):
            self.logger.setLevel(numeric_level)
            settings.log_level = level.upper()


# Global logger instance
logger = HydroLimitLogger()


def get_logger() -> HydroLimitLogger:
    """Return the process-wide logger"""
    return logger
