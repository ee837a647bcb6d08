import logging
import sys
from datetime import datetime
from pathlib import Path


def setup_logger(name: str = "modules", log_level: str = "INFO",
                 log_dir: str = "logs", to_file: bool = False) -> logging.Logger:
    """
    Setup logger with timestamped console output and optional dated log files

    Args:
        name: Logger name (the package root, so every module logger inherits it)
        log_level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_dir: Directory for run and error log files
        to_file: Also write detailed run/error logs under log_dir

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(name)

    # Prevent duplicate handlers
    if logger.handlers:
        return logger

    logger.setLevel(getattr(logging, log_level.upper()))

    detailed_formatter = logging.Formatter(
        fmt='%(asctime)s | %(levelname)-8s | %(filename)s:%(lineno)d | %(funcName)s() | %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    console_formatter = logging.Formatter(
        fmt='%(asctime)s | %(levelname)-8s | %(filename)s | %(message)s',
        datefmt='%H:%M:%S'
    )

    # Console handler on stderr; stdout is reserved for CSV
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(getattr(logging, log_level.upper()))
    console_handler.setFormatter(console_formatter)
    logger.addHandler(console_handler)

    if to_file:
        directory = Path(log_dir)
        directory.mkdir(parents=True, exist_ok=True)
        stamp = datetime.now().strftime('%Y%m%d')

        file_handler = logging.FileHandler(directory / f"infinichain_{stamp}.log")
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(detailed_formatter)

        # Error file handler - only errors and critical
        error_handler = logging.FileHandler(directory / f"infinichain_errors_{stamp}.log")
        error_handler.setLevel(logging.ERROR)
        error_handler.setFormatter(detailed_formatter)

        logger.addHandler(file_handler)
        logger.addHandler(error_handler)

    logger.propagate = False
    return logger
