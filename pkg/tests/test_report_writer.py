"""
CSV report output
"""

import sys
from pathlib import Path

# Add repository root to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from modules.report_writer import ReportWriter, read_rows


def test_cells_are_stable(tmp_path):
    path = tmp_path / 'nested' / 'out.csv'
    rows = [{'k': 1, 'value': 0.1, 'flag': True, 'missing': None, 'extra': 'dropped'},
            {'k': 2, 'value': 1 / 3, 'flag': False, 'missing': None}]
    count = ReportWriter(str(path)).write_rows(rows, ['k', 'value', 'flag', 'missing'])
    assert count == 2
    assert path.read_text() == "k,value,flag,missing\n1,0.1,1,\n2,0.3333333333333333,0,\n"


def test_read_back(tmp_path):
    path = tmp_path / 'out.csv'
    ReportWriter(str(path)).write_rows([{'a': 'x;y', 'b': 2.5}], ['a', 'b'])
    assert read_rows(str(path)) == [{'a': 'x;y', 'b': '2.5'}]


def test_stdout_when_no_path(capsys):
    ReportWriter().write_rows([{'a': 1}], ['a'])
    assert capsys.readouterr().out == "a\n1\n"
