"""
Environment-driven configuration
"""

import sys
from pathlib import Path

import pytest

# Add repository root to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from config import Config


def test_defaults(monkeypatch):
    for name in ('INFINICHAIN_WINDOW_CAP', 'INFINICHAIN_PROBE_PASTS', 'LOG_LEVEL', 'INFINICHAIN_LOG_TO_FILE'):
        monkeypatch.delenv(name, raising=False)
    config = Config()
    assert config.WINDOW_CAP == 2 ** 20
    assert config.PROBE_PASTS == 10
    assert config.LOG_LEVEL == 'INFO'
    assert config.LOG_TO_FILE is False
    assert config.WORKERS >= 1
    assert config.validate()


def test_environment_overrides(monkeypatch):
    monkeypatch.setenv('INFINICHAIN_WORKERS', '3')
    monkeypatch.setenv('INFINICHAIN_WINDOW_CAP', '4096')
    monkeypatch.setenv('INFINICHAIN_LEFTOVER_TOL', '1e-7')
    config = Config()
    assert config.WORKERS == 3
    assert config.WINDOW_CAP == 4096
    assert config.LEFTOVER_TOL == pytest.approx(1e-7)


def test_validate_collects_every_error(monkeypatch):
    monkeypatch.setenv('INFINICHAIN_WORKERS', '0')
    monkeypatch.setenv('INFINICHAIN_PROBE_DEPTH', '0')
    monkeypatch.setenv('LOG_LEVEL', 'LOUD')
    with pytest.raises(ValueError) as info:
        Config().validate()
    message = str(info.value)
    assert message.startswith('Configuration errors:')
    assert 'INFINICHAIN_WORKERS' in message
    assert 'INFINICHAIN_PROBE_DEPTH' in message
    assert 'LOG_LEVEL' in message


def test_log_dir_is_created_for_file_logging(monkeypatch, tmp_path):
    monkeypatch.setenv('INFINICHAIN_LOG_TO_FILE', 'true')
    monkeypatch.setenv('LOG_DIR', str(tmp_path / 'logs'))
    Config().validate()
    assert (tmp_path / 'logs').is_dir()
