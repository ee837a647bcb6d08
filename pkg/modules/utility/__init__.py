from .logger import setup_logger
from .utils import format_float, parse_float_list, parse_int_list, replica_key
from .workers import run_replicas

__all__ = [
    'setup_logger',
    'format_float',
    'parse_float_list',
    'parse_int_list',
    'replica_key',
    'run_replicas'
]
