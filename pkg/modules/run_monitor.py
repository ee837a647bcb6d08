"""
Run Monitoring Module
Host facts and process resource usage for simulation runs
"""

import logging
import os
import time
from datetime import datetime
from typing import Dict

import psutil

logger = logging.getLogger(__name__)


class RunMonitor:
    """Track wall time and resources of the current run"""

    def __init__(self, config):
        self.config = config
        self.process = psutil.Process(os.getpid())
        self.started = time.perf_counter()
        self.started_at = datetime.now().isoformat()

    def get_host_info(self) -> Dict:
        """Static host facts"""
        memory = psutil.virtual_memory()
        return {
            'physical_cores': psutil.cpu_count(logical=False),
            'logical_cores': psutil.cpu_count(),
            'memory_total_gb': memory.total / (1024**3),
            'memory_available_gb': memory.available / (1024**3),
            'workers': self.config.WORKERS
        }

    def get_run_stats(self) -> Dict:
        """Resource usage since the monitor started"""
        cpu = self.process.cpu_times()
        return {
            'timestamp': datetime.now().isoformat(),
            'started_at': self.started_at,
            'elapsed_s': time.perf_counter() - self.started,
            'cpu_user_s': cpu.user,
            'cpu_system_s': cpu.system,
            'rss_mb': self.process.memory_info().rss / (1024**2),
            'memory_percent': psutil.virtual_memory().percent
        }

    def log_start(self, command: str):
        host = self.get_host_info()
        logger.info(f"Run '{command}' on {host['physical_cores']} physical / {host['logical_cores']} logical cores, "
                    f"{host['memory_available_gb']:.1f} of {host['memory_total_gb']:.1f} GB free, "
                    f"{host['workers']} worker(s)")

    def log_summary(self, command: str):
        stats = self.get_run_stats()
        logger.info("=" * 60)
        logger.info(f"{command.upper()} COMPLETED")
        logger.info("=" * 60)
        logger.info(f"Elapsed:   {stats['elapsed_s']:.2f} s")
        logger.info(f"CPU time:  {stats['cpu_user_s'] + stats['cpu_system_s']:.2f} s (main process)")
        logger.info(f"RSS:       {stats['rss_mb']:.1f} MB")
        logger.info("=" * 60)
