"""
Report Writing Module
CSV output for every subcommand
"""

import csv
import logging
import sys
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

from .utility.utils import format_float

logger = logging.getLogger(__name__)


def _cell(value) -> str:
    if value is None:
        return ''
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return format_float(value)
    return str(value)


class ReportWriter:
    """Write rows as CSV to a file or to stdout"""

    def __init__(self, out_path: Optional[str] = None):
        self.out_path = out_path

    def write_rows(self, rows: Iterable[Dict], fieldnames: Sequence[str]) -> int:
        """Write header and rows; float cells use repr so reruns are byte-identical"""
        count = 0
        if self.out_path:
            path = Path(self.out_path)
            path.parent.mkdir(parents=True, exist_ok=True)
            handle = open(path, 'w', newline='')
        else:
            handle = sys.stdout
        try:
            writer = csv.DictWriter(handle, fieldnames=list(fieldnames), lineterminator='\n',
                                    extrasaction='ignore')
            writer.writeheader()
            for row in rows:
                writer.writerow({key: _cell(row.get(key)) for key in fieldnames})
                count += 1
        finally:
            if handle is not sys.stdout:
                handle.close()
            else:
                handle.flush()

        logger.info(f"Wrote {count} rows to {self.out_path or 'stdout'}")
        return count


def read_rows(path: str) -> List[Dict]:
    """Read a CSV written by ReportWriter back into dicts of strings"""
    with open(path, newline='') as f:
        return list(csv.DictReader(f))
