"""
Kernel families and continuity rates
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add repository root to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from modules.errors import ContextSpaceTooLarge, InvalidKernel, UndeterminedProbability
from modules.kernel import (ExtensionRule, MarkovKernel, MixtureKernel, RenewalKernel,
                            alpha_context_bruteforce, alpha_seq, all_contexts, context_code)
from modules.kernel_spec import load_kernel


def markov_o1():
    return MarkovKernel.from_rows(1, {(1,): [0.7, 0.3], (2,): [0.4, 0.6]}, kernel_id='m1')


def test_context_code_is_oldest_first():
    """Test: base-N code with the oldest symbol most significant"""
    assert context_code((), 2) == 0
    assert context_code((2, 1), 2) == 2
    assert context_code((1, 2), 2) == 1
    assert [context_code(c, 3) for c in all_contexts(2, 3)] == list(range(9))


def test_renewal_probability_depends_on_age():
    kernel = RenewalKernel([0.5, 0.3, 0.2], tail='constant')
    assert kernel.prob(2, (1, 2)) == pytest.approx(0.5)
    assert kernel.prob(2, (2, 1)) == pytest.approx(0.3)
    assert kernel.prob(2, (2, 1, 1, 1, 1)) == pytest.approx(0.2)
    assert kernel.prob(1, (2, 1, 1)) == pytest.approx(0.8)


def test_renewal_all_ones_past():
    """Test: the all-1 past is exact only when the tail of p is constant"""
    constant = RenewalKernel([0.5, 0.3])
    assert constant.prob(2, (1, 1, 1)) == pytest.approx(0.3)
    with pytest.raises(UndeterminedProbability):
        constant.probs(())

    periodic = RenewalKernel([0.4, 0.3], tail='periodic')
    with pytest.raises(UndeterminedProbability):
        periodic.probs((1,) * 50)
    assert periodic.probs((1,) * 50, ExtensionRule.INFIMUM) == pytest.approx([0.6, 0.3])
    assert periodic.probs((1,) * 50, ExtensionRule.SUPREMUM) == pytest.approx([0.7, 0.4])


def test_renewal_alphas():
    periodic = RenewalKernel([0.4, 0.3], tail='periodic')
    assert periodic.alpha1 == pytest.approx(0.6)
    assert periodic.alpha2 == pytest.approx(0.3)
    assert periodic.alpha(10) == pytest.approx(0.9)
    assert periodic.alpha_limit() == pytest.approx(0.9)

    drop = RenewalKernel([0.5, 0.3])
    assert drop.alpha(0) == pytest.approx(0.8)
    assert drop.alpha(1) == pytest.approx(1.0)

    iid = RenewalKernel([0.4])
    assert all(iid.alpha(k) == pytest.approx(1.0) for k in range(5))


def test_renewal_rejects_bad_values():
    with pytest.raises(InvalidKernel):
        RenewalKernel([0.0, 0.5])
    with pytest.raises(InvalidKernel):
        RenewalKernel([0.5, 1.0])
    with pytest.raises(InvalidKernel):
        RenewalKernel([])
    with pytest.raises(InvalidKernel):
        RenewalKernel([0.5], tail='geometric')


def test_markov_alphas():
    kernel = markov_o1()
    assert kernel.order == 1
    assert kernel.alpha(0) == pytest.approx(0.7)
    assert kernel.alpha(1) == pytest.approx(1.0)
    assert kernel.alpha(7) == pytest.approx(1.0)
    assert kernel.infima(()) == pytest.approx([0.4, 0.3])


def test_markov_needs_every_row():
    with pytest.raises(InvalidKernel):
        MarkovKernel.from_rows(1, {(1,): [0.7, 0.3]})
    with pytest.raises(InvalidKernel):
        MarkovKernel.from_rows(1, {(1,): [0.7, 0.2], (2,): [0.4, 0.6]})


def test_exact_probability_needs_the_order():
    with pytest.raises(UndeterminedProbability):
        markov_o1().prob(1, ())


def test_copy_mixture_alpha_equals_cumulative_weight():
    """Test: for the random-lag copy chain alpha_k = lambda_0 + ... + lambda_k"""
    weights = [0.5, 0.25, 0.125, 0.125]
    kernel = MixtureKernel.of_family(weights, 'copy')
    expected = np.cumsum(weights)
    for k in range(4):
        assert kernel.alpha(k) == pytest.approx(expected[k])
    assert kernel.cumulative_weights() == pytest.approx(expected)


def test_vote_mixture_is_binary_only():
    with pytest.raises(InvalidKernel):
        MixtureKernel.of_family([0.5, 0.5], 'vote', alphabet_size=3)


def test_mixture_weights_and_state_cap():
    with pytest.raises(InvalidKernel):
        MixtureKernel.of_family([0.5, 0.6], 'copy')
    with pytest.raises(ContextSpaceTooLarge):
        MixtureKernel.of_family(np.full(14, 1 / 14), 'copy', state_cap=4096)


def test_alpha_matches_bruteforce_on_ternary_kernel():
    kernel = load_kernel('markov_k1star')
    assert kernel.alpha(0) == pytest.approx(0.0)
    assert kernel.alpha(1) == pytest.approx(0.6)
    assert kernel.alpha(2) == pytest.approx(1.0)
    for context in all_contexts(1, 3):
        assert kernel.alpha_context(context) == pytest.approx(alpha_context_bruteforce(kernel, context, 1))


def test_alpha_sequence_is_monotone_with_plateau():
    alphas = alpha_seq(RenewalKernel([0.4, 0.3], tail='periodic'), 6)
    assert np.all(np.diff(alphas.values) >= 0)
    assert alphas.plateau
    assert not alphas.reaches_one()
    assert alphas.value(100) == pytest.approx(0.9)

    mixture = alpha_seq(MixtureKernel.of_family(0.5 ** np.arange(9) / np.sum(0.5 ** np.arange(9)), 'copy'), 3)
    assert not mixture.plateau
    with pytest.raises(IndexError):
        mixture.value(4)
