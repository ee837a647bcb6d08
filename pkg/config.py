"""
Configuration for infinichain runs
Load settings from environment variables with defaults
"""

import os
import logging
from pathlib import Path

import psutil
from dotenv import load_dotenv

# Load .env file if exists
load_dotenv()

logger = logging.getLogger(__name__)


def _default_workers() -> int:
    cores = psutil.cpu_count(logical=False)
    return cores if cores else 1


class Config:
    """Simulation configuration"""

    def __init__(self):
        # Parallel replicas
        self.WORKERS = int(os.getenv('INFINICHAIN_WORKERS', _default_workers()))

        # Search and enumeration caps
        self.WINDOW_CAP = int(os.getenv('INFINICHAIN_WINDOW_CAP', 2 ** 20))
        self.CONTEXT_CAP = int(os.getenv('INFINICHAIN_CONTEXT_CAP', 2 ** 16))
        self.STATE_CAP = int(os.getenv('INFINICHAIN_STATE_CAP', 4096))

        # Coalescence probing
        self.PROBE_PASTS = int(os.getenv('INFINICHAIN_PROBE_PASTS', 10))
        self.PROBE_DEPTH = int(os.getenv('INFINICHAIN_PROBE_DEPTH', 64))

        # Numerical tolerance for partition leftovers
        self.LEFTOVER_TOL = float(os.getenv('INFINICHAIN_LEFTOVER_TOL', 1e-9))

        # Logging settings
        self.LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
        self.LOG_DIR = os.getenv('LOG_DIR', 'logs')
        self.LOG_TO_FILE = os.getenv('INFINICHAIN_LOG_TO_FILE', 'False').lower() == 'true'

    def validate(self):
        """Validate configuration"""
        errors = []

        if self.WORKERS < 1:
            errors.append("INFINICHAIN_WORKERS must be >= 1")

        if self.WINDOW_CAP < 1:
            errors.append("INFINICHAIN_WINDOW_CAP must be >= 1")

        if self.CONTEXT_CAP < 2:
            errors.append("INFINICHAIN_CONTEXT_CAP must be >= 2")

        if self.STATE_CAP < 2:
            errors.append("INFINICHAIN_STATE_CAP must be >= 2")

        if self.PROBE_PASTS < 1:
            errors.append("INFINICHAIN_PROBE_PASTS must be >= 1")

        if self.PROBE_DEPTH < 1:
            errors.append("INFINICHAIN_PROBE_DEPTH must be >= 1")

        if not 0 < self.LEFTOVER_TOL < 1e-3:
            errors.append("INFINICHAIN_LEFTOVER_TOL must lie in (0, 1e-3)")

        if self.LOG_LEVEL.upper() not in ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'):
            errors.append(f"LOG_LEVEL '{self.LOG_LEVEL}' is not a logging level")

        # Create log directory if not exists
        if self.LOG_TO_FILE:
            Path(self.LOG_DIR).mkdir(parents=True, exist_ok=True)

        if errors:
            raise ValueError(f"Configuration errors: {', '.join(errors)}")

        return True

    def log_summary(self):
        """Log configuration summary"""
        logger.info("=" * 60)
        logger.info("infinichain configuration")
        logger.info("=" * 60)
        logger.info(f"Workers:          {self.WORKERS}")
        logger.info(f"Window cap:       {self.WINDOW_CAP}")
        logger.info(f"Context cap:      {self.CONTEXT_CAP}")
        logger.info(f"Probe pasts:      {self.PROBE_PASTS} (depth {self.PROBE_DEPTH})")
        logger.info(f"Leftover tol:     {self.LEFTOVER_TOL:g}")
        logger.info(f"Log level:        {self.LOG_LEVEL}")
        logger.info("=" * 60)
