"""
Unit tests for logger module
"""

import logging

from hydrolimit.core.logger import setup_logger, get_logger, ColoredFormatter, logger


def _record(level: str = "ERROR", message: str = "Test message") -> logging.LogRecord:
    return logging.makeLogRecord({"levelname": level, "levelno": getattr(logging, level),
                                  "msg": message, "name": "hydrolimit"})


class TestColoredFormatter:
    """Test ColoredFormatter class"""

    def test_format_with_color_codes(self):
        formatted = ColoredFormatter().format(_record())
        assert "\033[31m" in formatted
        assert "Test message" in formatted

    def test_format_without_color_codes(self):
        formatted = ColoredFormatter(use_colors=False).format(_record())
        assert "\033[" not in formatted
        assert "Test message" in formatted

    def test_record_levelname_is_restored(self):
        record = _record("WARNING")
        ColoredFormatter().format(record)
        assert record.levelname == "WARNING"


class TestLoggerSetup:
    """Test logger setup functionality"""

    def test_setup_logger_with_file(self, tmp_path):
        log_file = tmp_path / "logs" / "test.log"
        log = setup_logger(name="test_logger_file", log_file=log_file, level="DEBUG")
        assert log.level == logging.DEBUG
        assert len(log.handlers) == 2
        assert log.propagate is False

        log.warning("written to file")
        for handler in log.handlers:
            handler.flush()
        assert "written to file" in log_file.read_text()

    def test_setup_logger_without_file(self):
        log = setup_logger(name="test_logger_console", level="INFO")
        assert len(log.handlers) == 1

    def test_setup_is_idempotent(self, tmp_path):
        setup_logger(name="test_logger_twice", log_file=tmp_path / "a.log")
        log = setup_logger(name="test_logger_twice", log_file=tmp_path / "a.log")
        assert len(log.handlers) == 2

    def test_level_filtering(self, tmp_path):
        log_file = tmp_path / "levels.log"
        log = setup_logger(name="test_logger_levels", log_file=log_file, level="WARNING")
        log.info("Info message")
        log.error("Error message")
        for handler in log.handlers:
            handler.flush()
        content = log_file.read_text()
        assert "Info message" not in content
        assert "Error message" in content


class TestHydroLimitLogger:
    """Test the structured helpers of the global logger"""

    def test_get_logger_returns_singleton(self):
        assert get_logger() is logger

    def test_log_performance(self, mocker):
        info = mocker.patch.object(logger, "info")
        logger.log_performance("solve_pnk", 1.5, N=64)
        message = info.call_args[0][0]
        assert "solve_pnk took 1.50s" in message
        assert "'N': 64" in message

    def test_log_experiment_step(self, mocker):
        info = mocker.patch.object(logger, "info")
        logger.log_experiment_step("simulate", "completed", {"replicas": 4})
        assert "Step: simulate - Status: completed" in info.call_args[0][0]

    def test_log_file_operation_is_debug(self, mocker):
        debug = mocker.patch.object(logger, "debug")
        logger.log_file_operation("write", "/tmp/x.csv", 120)
        assert "Size: 120 bytes" in debug.call_args[0][0]

    def test_set_level(self):
        previous = logger.logger.level
        try:
            logger.set_level("debug")
            assert logger.logger.level == logging.DEBUG
        finally:
            logger.logger.setLevel(previous)
