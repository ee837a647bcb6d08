"""
Markov Approximation
Canonical k-step transition tables P^[k](a|context) = mu(X_0 = a | X_{-k}^{-1} = context)
and standalone simulation of the k-step chain
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import linalg, stats

from .errors import ContextSpaceTooLarge, InvalidKernel, OrderTooHigh
from .kernel import (ExtensionRule, Kernel, Past, RenewalKernel, all_contexts,
                     context_code)
from .partition import context_label, default_partition

logger = logging.getLogger(__name__)

ROW_TOL = 1e-12
AGE_TAIL_TOL = 1e-12
MAX_AGE_LENGTH = 10 ** 7


@dataclass
class CanonicalPkTable:
    """
    P^[k] rows by context

    Rows are stored explicitly, except for contexts an exact `source` kernel
    resolves on its own (contexts at least as long as its order, or renewal
    contexts holding a 2); those are read from the kernel on demand.
    """
    k: int
    alphabet_size: int
    provenance: str
    rows: Dict[Past, np.ndarray] = field(default_factory=dict)
    source: Optional[Kernel] = None
    flags: Dict[Past, str] = field(default_factory=dict)
    intervals: Dict[Past, np.ndarray] = field(default_factory=dict)

    def row(self, context: Sequence[int]) -> np.ndarray:
        context = tuple(context)
        if len(context) != self.k:
            raise ValueError(f"P^[{self.k}] row needs a context of length {self.k}, got {len(context)}")
        stored = self.rows.get(context)
        if stored is not None:
            return stored
        if self.source is not None:
            return self.source.probs(context, ExtensionRule.EXACT)
        raise KeyError(f"no P^[{self.k}] row for context {context_label(context)}")

    def prob(self, a: int, context: Sequence[int]) -> float:
        return float(self.row(context)[a - 1])

    def to_rows(self, context_cap: int = 2 ** 16) -> List[Dict]:
        """CSV rows (context, symbol, probability, provenance)"""
        size = self.alphabet_size ** self.k
        if size > context_cap:
            raise ContextSpaceTooLarge(size, context_cap)
        out = []
        for context in all_contexts(self.k, self.alphabet_size):
            row = self.row(context)
            provenance = self.provenance
            if context in self.flags:
                provenance = f"{provenance}|{self.flags[context]}"
            for a in range(1, self.alphabet_size + 1):
                out.append({'context': context_label(context), 'symbol': a,
                            'probability': float(row[a - 1]), 'provenance': provenance})
        return out

    @classmethod
    def from_rows(cls, rows: Sequence[Dict], alphabet_size: Optional[int] = None) -> 'CanonicalPkTable':
        if not rows:
            raise ValueError("no rows to import")
        if alphabet_size is None:
            alphabet_size = max(int(r['symbol']) for r in rows)
        collected: Dict[Past, np.ndarray] = {}
        flags: Dict[Past, str] = {}
        provenance = ''
        k = None
        for r in rows:
            context = _parse_context(str(r['context']))
            if k is None:
                k = len(context)
            elif len(context) != k:
                raise ValueError(f"mixed context lengths {k} and {len(context)}")
            base, _, flag = str(r['provenance']).partition('|')
            provenance = provenance or base
            if flag:
                flags[context] = flag
            collected.setdefault(context, np.zeros(alphabet_size))[int(r['symbol']) - 1] = float(r['probability'])
        for context, row in collected.items():
            if abs(row.sum() - 1.0) > 1e-9:
                raise ValueError(f"row {context_label(context)} sums to {row.sum()!r}")
        return cls(k=k, alphabet_size=alphabet_size, provenance=provenance, rows=collected, flags=flags)


def _parse_context(label: str) -> Past:
    if not label:
        return ()
    if '-' in label:
        return tuple(int(s) for s in label.split('-'))
    return tuple(int(s) for s in label)


@dataclass
class AgeDistribution:
    """
    Stationary law of the time since the latest 2 in a renewal chain

    pi_j is proportional to prod_{i<j}(1 - p_i); the support is cut once the
    remaining mass is below `tol` and the weights are renormalized.
    """
    kernel: RenewalKernel
    pi: np.ndarray
    tol: float = AGE_TAIL_TOL

    @classmethod
    def of(cls, kernel: RenewalKernel, tol: float = AGE_TAIL_TOL) -> 'AgeDistribution':
        weights = _survival_weights(kernel, 0, tol)
        return cls(kernel=kernel, pi=weights / weights.sum(), tol=tol)

    def tail(self, k: int) -> float:
        """P(age >= k)"""
        return float(self.pi[k:].sum())

    def mean(self) -> float:
        return float(np.dot(np.arange(len(self.pi)), self.pi))

    def hazard_beyond(self, k: int) -> float:
        """P(next symbol is 2 | age >= k)"""
        # the age law given age >= k is the age law of a chain restarted at age k,
        # so weights are rebuilt from k instead of dividing underflowed tails
        weights = _survival_weights(self.kernel, k, self.tol)
        p = self.kernel.p_array(k + len(weights))[k:]
        return float(np.dot(weights, p) / weights.sum())


def _survival_weights(kernel: RenewalKernel, start: int, tol: float) -> np.ndarray:
    """prod_{start<=i<j}(1 - p_i) for j = start, start+1, ... until the tail is below tol"""
    # the tail after index j is at most w_j / alpha(2)
    decay = 1.0 - kernel.alpha2
    length = int(np.ceil(np.log(tol * kernel.alpha2) / np.log(decay))) + 2 if decay > 0 else 1
    length = max(1, min(length, MAX_AGE_LENGTH))
    q = 1.0 - kernel.p_array(start + length)[start:]
    weights = np.empty(length)
    weights[0] = 1.0
    weights[1:] = np.cumprod(q[:-1])
    return weights


def pk_exact(kernel: Kernel, k: int) -> CanonicalPkTable:
    """P^[k] = P for a finite-order kernel with order <= k"""
    if k < 0:
        raise ValueError("k must be >= 0")
    if kernel.order is None or kernel.order > k:
        raise OrderTooHigh(f"{kernel.kernel_id}: order {kernel.order} exceeds k={k}")
    return CanonicalPkTable(k=k, alphabet_size=kernel.alphabet_size, provenance='exact', source=kernel)


def pk_stationary(kernel: Kernel, k: int, state_cap: int = 4096) -> CanonicalPkTable:
    """
    P^[k] for a finite-order kernel of order m > k

    The stationary law of length-m blocks is the null vector of (Q^T - I), Q
    being the block transition matrix; rows are ratios of block marginals.
    """
    m = kernel.order
    if m is None:
        raise InvalidKernel(f"{kernel.kernel_id}: stationary block solver needs a finite order")
    if m <= k:
        return pk_exact(kernel, k)
    n = kernel.alphabet_size
    size = n ** m
    if size > state_cap:
        raise ContextSpaceTooLarge(size, state_cap)

    # block c = (c_1..c_m) moves to (c_2..c_m, a) with probability P(a|c)
    table = kernel.table
    transition = np.zeros((size, size))
    codes = np.arange(size)
    for a in range(n):
        transition[codes, (codes * n) % size + a] += table[:, a]
    basis = linalg.null_space(transition.T - np.eye(size))
    if basis.shape[1] != 1:
        raise InvalidKernel(f"{kernel.kernel_id}: stationary law is not unique ({basis.shape[1]} classes)")
    mu = basis[:, 0]
    mu = np.abs(mu / mu.sum())

    joint = (mu[:, None] * table).reshape(n ** (m - k), n ** k, n).sum(axis=0)
    marginal = joint.sum(axis=1)
    rows: Dict[Past, np.ndarray] = {}
    flags: Dict[Past, str] = {}
    for context in all_contexts(k, n):
        code = context_code(context, n)
        if marginal[code] > 0:
            row = joint[code] / marginal[code]
        else:
            infima = kernel.infima(context)
            row = infima + (1.0 - infima.sum()) / n
            flags[context] = 'unreachable'
        row.setflags(write=False)
        rows[context] = row
    logger.info(f"P^[{k}] of {kernel.kernel_id} from the stationary law of {size} blocks")
    return CanonicalPkTable(k=k, alphabet_size=n, provenance='stationary', rows=rows, flags=flags)


def pk_renewal(kernel: RenewalKernel, k: int) -> CanonicalPkTable:
    """Contexts holding a 2 are exact; the all-ones context uses the age distribution"""
    if not isinstance(kernel, RenewalKernel):
        raise InvalidKernel("pk_renewal needs a renewal kernel")
    if k < 0:
        raise ValueError("k must be >= 0")
    q = AgeDistribution.of(kernel).hazard_beyond(k)
    ones = np.array([1.0 - q, q])
    ones.setflags(write=False)
    return CanonicalPkTable(k=k, alphabet_size=2, provenance='age_distribution',
                            rows={(1,) * k: ones}, source=kernel)


def _dominating_row(row: np.ndarray, infima: np.ndarray) -> np.ndarray:
    """Closest-in-shape row that is >= infima entrywise and sums to 1"""
    excess = np.maximum(row - infima, 0.0)
    spare = max(0.0, 1.0 - infima.sum())
    if excess.sum() > 0:
        return infima + spare * excess / excess.sum()
    return infima + spare / len(row)


def pk_empirical(kernel: Kernel, k: int, n_samples: int, seed: int, context_cap: int = 2 ** 16,
                 confidence: float = 0.95, window_cap: int = 2 ** 20) -> CanonicalPkTable:
    """
    Conditional frequencies of a perfect sample of n_samples + k symbols

    Each cell carries a Wilson interval. Unseen contexts get a uniform row and
    the 'unseen' flag; rows falling below the partition infima from sampling
    noise are projected back above them and flagged 'projected'.
    """
    from .cftp import perfect_sample

    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    n = kernel.alphabet_size
    size = n ** k
    if size > context_cap:
        raise ContextSpaceTooLarge(size, context_cap)

    partition = default_partition(kernel)
    sample = perfect_sample(partition, seed, n_samples + k, window_cap=window_cap).astype(np.int64) - 1
    windows = sliding_window_view(sample, k + 1)
    weights = n ** np.arange(k - 1, -1, -1) if k else np.zeros(0, dtype=np.int64)
    codes = windows[:, :k] @ weights if k else np.zeros(len(windows), dtype=np.int64)
    counts = np.zeros((size, n), dtype=np.int64)
    np.add.at(counts, (codes, windows[:, k]), 1)

    rows: Dict[Past, np.ndarray] = {}
    flags: Dict[Past, str] = {}
    intervals: Dict[Past, np.ndarray] = {}
    for context in all_contexts(k, n):
        code = context_code(context, n)
        total = int(counts[code].sum())
        if total == 0:
            rows[context] = np.full(n, 1.0 / n)
            flags[context] = 'unseen'
            continue
        row = counts[code] / total
        ci = []
        for a in range(n):
            interval = stats.binomtest(int(counts[code, a]), total).proportion_ci(
                confidence_level=confidence, method='wilson')
            ci.append((interval.low, interval.high))
        intervals[context] = np.array(ci)
        infima = kernel.infima(context)
        if np.any(row < infima - ROW_TOL):
            row = _dominating_row(row, infima)
            flags[context] = 'projected'
        rows[context] = row
    unseen = sum(1 for f in flags.values() if f == 'unseen')
    if unseen:
        logger.warning(f"P^[{k}] estimate of {kernel.kernel_id}: {unseen} of {size} contexts unseen")
    logger.info(f"P^[{k}] of {kernel.kernel_id} estimated from {n_samples} perfect samples (seed {seed})")
    return CanonicalPkTable(k=k, alphabet_size=n, provenance=f"empirical(n={n_samples}, ci={confidence})",
                            rows=rows, flags=flags, intervals=intervals)


def canonical_table(kernel: Kernel, k: int, state_cap: int = 4096) -> CanonicalPkTable:
    """Exact P^[k] when a closed form exists"""
    if isinstance(kernel, RenewalKernel):
        return pk_renewal(kernel, k)
    if kernel.order is None:
        raise InvalidKernel(f"{kernel.kernel_id}: no closed form for P^[{k}]; use pk_empirical")
    if kernel.order <= k:
        return pk_exact(kernel, k)
    return pk_stationary(kernel, k, state_cap)


def simulate_markov(table: CanonicalPkTable, n: int, seed: int, burn_in: int = 1000) -> np.ndarray:
    """n symbols of the order-k chain after `burn_in` steps from a uniform random context"""
    if n < 0 or burn_in < 0:
        raise ValueError("n and burn_in must be >= 0")
    rng = np.random.default_rng(seed)
    k = table.k
    history = [int(s) for s in rng.integers(1, table.alphabet_size + 1, size=k)]
    cumulative: Dict[Past, np.ndarray] = {}
    draws = rng.random(n + burn_in)
    out = np.empty(n + burn_in, dtype=np.int8)
    for i, u in enumerate(draws):
        context = tuple(history[len(history) - k:]) if k else ()
        edges = cumulative.get(context)
        if edges is None:
            edges = np.cumsum(table.row(context))
            cumulative[context] = edges
        symbol = min(int(np.searchsorted(edges, u, side='right')), table.alphabet_size - 1) + 1
        out[i] = symbol
        history.append(symbol)
        if len(history) > k:
            history.pop(0)
    return out[burn_in:]
