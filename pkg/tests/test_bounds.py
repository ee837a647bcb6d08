"""
d-bar estimates and the bounds assembled around them
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add repository root to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from modules.bounds import (EXACT, NOT_APPLICABLE, OK, VIOLATED, BoundValue, DbarEstimate,
                            LocalContinuitySpec, bound_achier, bound_ell, bound_local_continuity,
                            bound_summable, bound_theta_tail, estimate_dbar, renewal_ell, report, sample_ell,
                            sample_theta, summability_holds, verdict, wald_identity, weak_continuity_envelope)
from modules.errors import KTooSmall, NonSummable
from modules.estimates import wilson
from modules.kernel import AlphaSequence, RenewalKernel, alpha_seq
from modules.kernel_spec import load_kernel
from modules.partition import canonical_partition, default_partition


def estimate_of(value, sigma):
    return DbarEstimate(k=1, value=value, sigma=sigma, ci=wilson(int(value * 100), 100),
                        n_disagree=int(value * 100), n_sites=100, replicas=100)


def test_iid_kernel_never_disagrees():
    kernel = load_kernel('renewal_p04')
    estimate = estimate_dbar(kernel, 2, horizon=20, n_replicas=30, seed=0)
    assert estimate.value == 0.0
    assert estimate.n_disagree == 0
    assert estimate.n_sites == 600


def test_renewal_theta_tail_is_geometric():
    """Test: |theta| > k exactly when U_0..U_-k all miss the renewal mark, so P = 0.6^(k+1)"""
    kernel = load_kernel('renewal_p04')
    thetas = sample_theta(default_partition(kernel), 20000, seed=0)
    for k in (0, 2, 5):
        tail = wilson(int(np.count_nonzero(thetas > k)), len(thetas))
        assert tail.within(0.6 ** (k + 1))
    bound = bound_theta_tail(2, thetas)
    assert bound.value == pytest.approx(0.216, abs=0.02)


def test_theta_tail_beyond_the_window_cap():
    assert not bound_theta_tail(100, np.zeros(10, dtype=int), window_cap=64).applicable


def test_report_is_exact_at_the_markov_order():
    result = report(load_kernel('markov_o1'), [0, 1, 2], horizon=5, n_replicas=20, n_theta_replicas=200,
                    seed=3)
    assert [row['k'] for row in result.rows] == [0, 1, 2]
    for row in result.rows[1:]:
        assert row['verdicts'] == ';'.join(f"{name}={EXACT}" for name in
                                           ('summable', 'ell', 'theta', 'achier', 'local'))
        assert row['dbar_hat'] == '0.0'
    assert not result.violated
    assert result.theta_mean is not None
    assert 'estimate' not in result.to_rows()[0]


def test_verdict_logic():
    estimate = estimate_of(0.5, 0.01)
    assert verdict(estimate, BoundValue(value=0.4, upper=0.4)) == VIOLATED
    assert verdict(estimate, BoundValue(value=0.49, upper=0.52)) == OK
    # within three sigma of the bound
    assert verdict(estimate, BoundValue(value=0.48, upper=0.48)) == OK
    assert verdict(estimate, BoundValue.not_applicable('no sample')) == NOT_APPLICABLE


def test_achier_bound_needs_alpha_to_reach_one():
    plateau = alpha_seq(load_kernel('renewal_alt'), 6)
    assert not bound_achier(plateau, 3).applicable

    alphas = alpha_seq(load_kernel('markov_o1'), 3)
    assert bound_achier(alphas, 0).value == 1.0
    assert bound_achier(alphas, 1).value == pytest.approx(0.3)


def test_summable_bound_rejects_periodic_renewal():
    kernel = RenewalKernel([0.4, 0.3], tail='periodic')
    assert not summability_holds(alpha_seq(kernel, 10))
    with pytest.raises(NonSummable):
        bound_summable(kernel, 2, n_theta_replicas=10, seed=0)


def test_summable_bound_on_markov_kernel():
    bound = bound_summable(load_kernel('markov_o1'), 0, n_theta_replicas=500, seed=1)
    assert bound.applicable
    assert 0.3 <= bound.value <= bound.upper


def test_wald_identity_on_renewal_kernel():
    check = wald_identity(load_kernel('renewal_drop'), 0, n_replicas=2000, seed=0)
    assert check.agrees()
    assert check.product == pytest.approx(check.indicator, rel=0.1)


def test_local_continuity_bound():
    spec = LocalContinuitySpec.for_renewal(load_kernel('renewal_drop'))
    r = spec.r_sequence(6)
    assert r[0] == pytest.approx(0.8)
    assert np.all(np.diff(r) >= 0)
    with pytest.raises(KTooSmall):
        bound_local_continuity(spec, 3)
    bound = bound_local_continuity(spec, 40)
    assert bound.value > 0.0
    assert bound.upper == bound.value


def test_local_continuity_spec_validation():
    with pytest.raises(ValueError):
        LocalContinuitySpec(variant='weak', alpha2=0.3, alpha0=0.5)
    with pytest.raises(ValueError):
        LocalContinuitySpec(variant='uniform', alpha2=0.3, alpha0=0.5)
    uniform = LocalContinuitySpec(variant='uniform', alpha2=0.5, alpha0=0.5, alpha_ones=[0.5, 0.9, 0.99])
    assert uniform.r_sequence(4) == pytest.approx([0.5, 0.8, 0.98, 0.98])


@pytest.mark.slow
def test_estimate_does_not_depend_on_workers():
    kernel = load_kernel('mixture_geo8')
    serial = estimate_dbar(kernel, 2, horizon=10, n_replicas=40, seed=1, workers=1)
    pooled = estimate_dbar(kernel, 2, horizon=10, n_replicas=40, seed=1, workers=2)
    assert serial.n_disagree == pooled.n_disagree
    assert serial.sigma == pooled.sigma


@pytest.mark.slow
def test_copy_mixture_stays_under_the_summable_bound():
    """Test: k = 1..8 with E|theta| from 10^4 coalescence replicas; k = 8 is the order"""
    result = report(load_kernel('mixture_geo8'), range(1, 9), horizon=1, n_replicas=10 ** 4,
                    n_theta_replicas=10 ** 4, seed=0, workers=4)
    assert [row['k'] for row in result.rows] == list(range(1, 9))
    for row in result.rows[:-1]:
        assert 'summable=OK' in row['verdicts']
    assert 'summable=exact' in result.rows[-1]['verdicts']
    assert not result.violated


def test_harmonic_alphas_stay_under_the_envelope():
    """Test: 1 - alpha_k = 0.2/k puts the achier bound under the calibrated envelope past k = 64"""
    ks = np.arange(201)
    alphas = AlphaSequence(values=1.0 - 0.2 / np.maximum(ks, 1))
    for k in (80, 120, 200):
        assert bound_achier(alphas, k).value <= weak_continuity_envelope(0.2, k)


def test_ell_bound_covers_the_alternating_renewal_chain():
    """Test: the canonical coupling of renewal_alt stays under E(|theta|+1) P(ell > k)"""
    kernel = load_kernel('renewal_alt')
    sample = sample_ell(kernel, 4000, seed=0, limit=4)
    tails = []
    for k in (1, 2, 4):
        bound = bound_ell(kernel, k, 4000, seed=0, sample=sample)
        estimate = estimate_dbar(kernel, k, horizon=1, n_replicas=1000, seed=0,
                                 partition=canonical_partition(kernel))
        assert estimate.value <= bound.upper + 3 * estimate.sigma
        tail = wilson(int(np.count_nonzero(sample.ells > k)), len(sample.ells))
        # a level-0 mark of symbol 2 has probability min p = 0.3 and caps ell
        assert tail.value <= 0.7 ** k + 3 * tail.sigma + 1e-12
        tails.append(tail.value)
    assert tails == sorted(tails, reverse=True)
    assert not bound_ell(load_kernel('markov_o1'), 1, 10, seed=0).applicable


def test_larger_ell_only_loosens_the_local_bound():
    kernel = load_kernel('renewal_drop')
    tight = LocalContinuitySpec.for_renewal(kernel)
    loose = LocalContinuitySpec(variant='strong', alpha2=kernel.alpha2, alpha0=kernel.alpha(0),
                                ell=lambda i: 2 * renewal_ell(i))
    assert np.all(tight.r_sequence(50) >= loose.r_sequence(50))
    assert bound_local_continuity(loose, 40).value >= bound_local_continuity(tight, 40).value
