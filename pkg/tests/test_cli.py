"""
Command-line driver: exit codes and CSV output
"""

import sys
from pathlib import Path

import pytest

# Add repository root to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from modules import cli
from modules.cli import EXIT_OK, EXIT_USAGE, EXIT_VIOLATED, main
from modules.report_writer import read_rows


@pytest.fixture(autouse=True)
def single_worker(monkeypatch):
    monkeypatch.setenv('INFINICHAIN_WORKERS', '1')
    monkeypatch.setenv('INFINICHAIN_LOG_TO_FILE', 'false')


def test_hoc_constant_rows(tmp_path):
    out = tmp_path / 'hoc.csv'
    assert main(['hoc', '--r', 'const:0.5', '--kmax', '20', '--out', str(out)]) == EXIT_OK
    rows = read_rows(str(out))
    assert len(rows) == 21
    assert list(rows[0]) == cli.HOC_COLUMNS
    assert rows[0]['v_dp'] == '1.0'
    assert all(float(row['v_dp']) == pytest.approx(0.5) for row in rows[1:])


def test_hoc_exponential_bounds_hold(tmp_path):
    out = tmp_path / 'hoc.csv'
    assert main(['hoc', '--r', 'exp:0.5,0.1', '--kmax', '30', '--out', str(out)]) == EXIT_OK
    rows = read_rows(str(out))
    assert all(row['bound_iii'] for row in rows)


def test_csv_goes_to_stdout(capsys):
    assert main(['conc', '--alpha', '0.5', '--n', '10', '--x', '1.0']) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == 'alpha,n,x,exact,chernoff,ratio'
    assert len(lines) == 3
    assert lines[2].startswith('0.5,10,-1.0,')


def test_sample_rows(tmp_path):
    out = tmp_path / 'sample.csv'
    assert main(['sample', '--kernel', 'renewal_p04', '--n', '50', '--seed', '1,2', '--out', str(out)]) == EXIT_OK
    rows = read_rows(str(out))
    assert len(rows) == 100
    assert {row['seed'] for row in rows} == {'1', '2'}
    assert rows[49]['i'] == '0'
    assert {row['x'] for row in rows} <= {'1', '2'}


def test_couple_at_the_markov_order(tmp_path):
    out = tmp_path / 'couple.csv'
    assert main(['couple', '--kernel', 'markov_o1', '--k', '1', '--horizon', '200', '--out', str(out)]) == EXIT_OK
    rows = read_rows(str(out))
    assert len(rows) == 200
    assert all(row['disagree'] == '0' for row in rows)


def test_bounds_report(tmp_path):
    out = tmp_path / 'bounds.csv'
    code = main(['bounds', '--kernel', 'markov_o1', '--k', '1,2', '--replicas', '20', '--theta-replicas', '100',
                 '--horizon', '5', '--out', str(out)])
    assert code == EXIT_OK
    rows = read_rows(str(out))
    assert [row['k'] for row in rows] == ['1', '2']
    assert all('VIOLATED' not in row['verdicts'] for row in rows)


def test_dbar_rows(tmp_path):
    out = tmp_path / 'dbar.csv'
    assert main(['dbar', '--kernel', 'renewal_p04', '--k', '2,4', '--replicas', '50', '--out', str(out)]) == EXIT_OK
    rows = read_rows(str(out))
    assert [row['dbar_hat'] for row in rows] == ['0.0', '0.0']


@pytest.mark.parametrize('argv', [
    [],
    ['hoc'],
    ['hoc', '--r', 'const:0.5', '--bogus'],
    ['hoc', '--r', 'nonsense:1'],
    ['hoc', '--r', 'const:0.5', '--kmax', '0'],
    ['sample', '--kernel', 'no_such_kernel'],
    ['sample', '--kernel', 'markov_o1', '--partition', 'renewal'],
    ['sample', '--kernel', 'renewal_p04', '--workers', '0'],
    ['conc', '--plot', 'x.png'],
    ['dbar', '--kernel', 'renewal_p04', '--k', '2', '--log-level', 'LOUD'],
])
def test_usage_errors_exit_with_one(argv):
    assert main(argv) == EXIT_USAGE


def test_violations_exit_with_two(monkeypatch):
    rows = [{'alpha': 0.5, 'n': 10, 'x': 1.0, 'exact': 0.5, 'chernoff': 0.1, 'ratio': 5.0}]
    monkeypatch.setattr(cli, 'conc_table', lambda *args, **kwargs: rows)
    assert main(['conc']) == EXIT_VIOLATED


def test_plot_is_written(tmp_path):
    pytest.importorskip('matplotlib')
    out = tmp_path / 'hoc.csv'
    image = tmp_path / 'plots' / 'hoc.png'
    assert main(['hoc', '--r', 'const:0.5', '--out', str(out), '--plot', str(image)]) == EXIT_OK
    assert image.is_file()


@pytest.mark.slow
@pytest.mark.parametrize('command', [
    ['dbar', '--kernel', 'mixture_geo8', '--k', '2,4', '--replicas', '64', '--horizon', '5'],
    ['bounds', '--kernel', 'renewal_alt', '--k', '1,2', '--replicas', '64', '--theta-replicas', '200'],
])
def test_output_does_not_depend_on_workers(tmp_path, command):
    outputs = []
    for workers in ('1', '4', '16'):
        out = tmp_path / f"out_{workers}.csv"
        main(command + ['--seed', '11', '--workers', workers, '--out', str(out)])
        outputs.append(out.read_bytes())
    assert outputs[0]
    assert outputs[1] == outputs[0]
    assert outputs[2] == outputs[0]


@pytest.mark.slow
def test_selftest_passes():
    assert main(['selftest', '--replicas', '5']) == EXIT_OK
