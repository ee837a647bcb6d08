"""
Canonical k-step Markov approximations
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add repository root to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from modules.errors import ContextSpaceTooLarge, InvalidKernel, OrderTooHigh
from modules.kernel import RenewalKernel
from modules.kernel_spec import load_kernel
from modules.markov_approx import (AgeDistribution, CanonicalPkTable, canonical_table, pk_empirical,
                                   pk_exact, pk_renewal, pk_stationary, simulate_markov)
from modules.report_writer import ReportWriter, read_rows


def test_exact_table_reads_the_kernel():
    kernel = load_kernel('markov_o1')
    table = pk_exact(kernel, 2)
    assert table.provenance == 'exact'
    assert table.row((2, 1)) == pytest.approx([0.7, 0.3])
    assert table.prob(2, (1, 2)) == pytest.approx(0.6)
    with pytest.raises(ValueError):
        table.row((1,))
    with pytest.raises(OrderTooHigh):
        pk_exact(load_kernel('mixture_geo8'), 3)


def test_stationary_table_below_the_order():
    table = pk_stationary(load_kernel('markov_o1'), 0)
    assert table.provenance == 'stationary'
    assert table.row(()) == pytest.approx([4 / 7, 3 / 7])


def test_stationary_table_of_ternary_kernel_is_consistent():
    """Test: P^[1] averages the order-2 rows under the stationary law and dominates the infima"""
    kernel = load_kernel('markov_k1star')
    table = pk_stationary(kernel, 1)
    for context in [(1,), (2,), (3,)]:
        row = table.row(context)
        assert row.sum() == pytest.approx(1.0)
        assert np.all(row >= kernel.infima(context) - 1e-12)
    # the kernel is symmetric under relabelling the symbols
    assert table.prob(1, (1,)) == pytest.approx(table.prob(2, (2,)))


def test_stationary_solver_state_cap():
    with pytest.raises(ContextSpaceTooLarge):
        pk_stationary(load_kernel('mixture_geo8'), 2, state_cap=64)


def test_age_distribution_of_drop_kernel():
    """Test: p_0 = 0.5 then 0.3 gives P(2) = 1/E[return time] = 0.375"""
    kernel = RenewalKernel([0.5, 0.3])
    ages = AgeDistribution.of(kernel)
    assert ages.pi.sum() == pytest.approx(1.0)
    assert ages.hazard_beyond(0) == pytest.approx(0.375, abs=1e-9)
    assert ages.hazard_beyond(1) == pytest.approx(0.3, abs=1e-9)
    assert ages.tail(0) == pytest.approx(1.0)
    assert ages.pi[0] == pytest.approx(0.375, abs=1e-9)


def test_renewal_table():
    iid = pk_renewal(RenewalKernel([0.4]), 3)
    assert iid.row((1, 1, 1)) == pytest.approx([0.6, 0.4])
    assert iid.row((1, 2, 1)) == pytest.approx([0.6, 0.4])

    periodic = RenewalKernel([0.4, 0.3], tail='periodic')
    table = pk_renewal(periodic, 4)
    q = table.prob(2, (1, 1, 1, 1))
    assert 0.3 <= q <= 0.4
    assert table.row((2, 1, 1, 1)) == pytest.approx(periodic.probs((2, 1, 1, 1)))
    with pytest.raises(InvalidKernel):
        pk_renewal(load_kernel('markov_o1'), 1)


def test_canonical_table_dispatch():
    assert canonical_table(load_kernel('markov_o1'), 1).provenance == 'exact'
    assert canonical_table(load_kernel('markov_o1'), 0).provenance == 'stationary'
    assert canonical_table(load_kernel('renewal_alt'), 2).provenance == 'age_distribution'


def test_table_csv_roundtrip(tmp_path):
    table = pk_stationary(load_kernel('markov_k1star'), 1)
    path = tmp_path / 'pk.csv'
    ReportWriter(str(path)).write_rows(table.to_rows(), ['context', 'symbol', 'probability', 'provenance'])
    loaded = CanonicalPkTable.from_rows(read_rows(str(path)))
    assert loaded.k == 1
    assert loaded.alphabet_size == 3
    assert loaded.provenance == 'stationary'
    for context in [(1,), (2,), (3,)]:
        assert loaded.row(context) == pytest.approx(table.row(context), abs=1e-15)


def test_table_import_rejects_bad_rows():
    with pytest.raises(ValueError):
        CanonicalPkTable.from_rows([])
    rows = [{'context': '1', 'symbol': 1, 'probability': 0.5, 'provenance': 'x'},
            {'context': '1', 'symbol': 2, 'probability': 0.4, 'provenance': 'x'}]
    with pytest.raises(ValueError):
        CanonicalPkTable.from_rows(rows)


def test_empirical_table_is_close_to_the_exact_one():
    kernel = load_kernel('markov_o1')
    marginal = pk_empirical(kernel, 0, n_samples=20000, seed=1)
    assert marginal.provenance.startswith('empirical')
    assert marginal.row(()) == pytest.approx([4 / 7, 3 / 7], abs=0.03)
    low, high = marginal.intervals[()][0]
    assert low <= marginal.prob(1, ()) <= high

    table = pk_empirical(kernel, 1, n_samples=20000, seed=1)
    assert table.row((1,)) == pytest.approx([0.7, 0.3], abs=0.03)
    assert table.row((2,)) == pytest.approx([0.4, 0.6], abs=0.03)
    # rows below the kernel infima are projected back onto them
    assert set(table.flags.values()) <= {'projected'}


def test_empirical_table_flags_unseen_contexts():
    kernel = load_kernel('markov_o1')
    table = pk_empirical(kernel, 8, n_samples=20, seed=4)
    unseen = [c for c, flag in table.flags.items() if flag == 'unseen']
    assert unseen
    assert table.row(unseen[0]) == pytest.approx([0.5, 0.5])
    with pytest.raises(ContextSpaceTooLarge):
        pk_empirical(kernel, 8, n_samples=20, seed=4, context_cap=128)


def test_simulated_chain_follows_the_table():
    table = canonical_table(load_kernel('markov_o1'), 1)
    path = simulate_markov(table, 50000, seed=2)
    assert path.shape == (50000,)
    assert np.mean(path == 1) == pytest.approx(4 / 7, abs=0.02)
    after_one = path[1:][path[:-1] == 1]
    assert np.mean(after_one == 1) == pytest.approx(0.7, abs=0.02)
