"""
infinichain modules package
"""

from .kernel import MarkovKernel, MixtureKernel, RenewalKernel
from .partition import canonical_partition, default_partition, renewal_partition, truncate
from .cftp import UniformStream, coupled_sample, perfect_sample, reconstruct
from .markov_approx import CanonicalPkTable, canonical_table, pk_empirical
from .house_of_cards import HocSpec, vk_dp
from .bounds import estimate_dbar, report

__all__ = [
    'MarkovKernel',
    'MixtureKernel',
    'RenewalKernel',
    'canonical_partition',
    'default_partition',
    'renewal_partition',
    'truncate',
    'UniformStream',
    'coupled_sample',
    'perfect_sample',
    'reconstruct',
    'CanonicalPkTable',
    'canonical_table',
    'pk_empirical',
    'HocSpec',
    'vk_dp',
    'estimate_dbar',
    'report'
]
