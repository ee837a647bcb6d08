"""
Range Partitions
Per-past layouts of [0,1) into intervals labelled (range level, symbol)

For a past and a level k, `cumulative(k, context)` is the per-symbol mass of
levels 0..k, which depends only on the length-k context. Level k occupies
[T_{k-1}, T_k) with T_k = sum_a cumulative(k)[a]; inside a level the symbols
follow `symbol_order`. Nothing is materialized: lengths are computed on demand
and cached per (level, context).
"""

import logging
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidKernel, NegativeLeftover, NoResidualMass, PastTooShort
from .kernel import Kernel, Past, RenewalKernel, all_contexts

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9


@dataclass(frozen=True)
class Lookup:
    symbol: int
    range: int


def context_label(context: Sequence[int]) -> str:
    """Oldest-first text form of a context ('' for the empty one)"""
    if any(s > 9 for s in context):
        return '-'.join(str(s) for s in context)
    return ''.join(str(s) for s in context)


class RangePartition(ABC):
    """Lazy range partition of a kernel"""

    name = 'partition'

    def __init__(self, kernel: Kernel, tol: float = DEFAULT_TOL):
        self.kernel = kernel
        self.tol = tol
        self.symbol_order: Tuple[int, ...] = tuple(kernel.symbols)
        self._cache: Dict[Tuple[int, Past], np.ndarray] = {}
        self._lock = threading.Lock()

    # pickling for worker processes: caches are rebuilt on the other side
    def __getstate__(self):
        state = self.__dict__.copy()
        state['_cache'] = {}
        del state['_lock']
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.Lock()

    @abstractmethod
    def _cumulative(self, k: int, context: Past) -> np.ndarray:
        """Per-symbol sum of |I_j(a|context_j)| over j = 0..k"""

    def cumulative(self, k: int, context: Past) -> np.ndarray:
        key = (k, context)
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        value = self._cumulative(k, context)
        value.setflags(write=False)
        with self._lock:
            self._cache.setdefault(key, value)
        return value

    def level_lengths(self, k: int, context: Past) -> np.ndarray:
        """|I_k(a|context)| for every a; context has length k"""
        upper = self.cumulative(k, context)
        if k == 0:
            return upper.copy()
        return upper - self.cumulative(k - 1, context[1:])

    def is_complete(self, k: int, context: Past, total: float) -> bool:
        """True when no mass can sit above level k for this context"""
        order = self.kernel.order
        if order is not None and k >= order:
            return True
        return total >= 1.0 - self.tol

    def _pick(self, lower: float, increments: np.ndarray, u: float) -> Optional[int]:
        position = lower
        last_positive = None
        for a in self.symbol_order:
            length = increments[a - 1]
            if length <= 0:
                continue
            last_positive = a
            position += length
            if u < position:
                return a
        return last_positive

    def locate(self, past: Sequence[int], u: float) -> Lookup:
        """(symbol, range) of the interval holding u for this past"""
        n = len(past)
        previous = np.zeros(self.kernel.alphabet_size)
        lower = 0.0
        k = 0
        while True:
            if k > n:
                raise PastTooShort(k)
            context = tuple(past[n - k:]) if k else ()
            upper = self.cumulative(k, context)
            total = float(upper.sum())
            if u < total:
                symbol = self._pick(lower, upper - previous, u)
                if symbol is not None:
                    return Lookup(symbol, k)
            if self.is_complete(k, context, total):
                return self._residual(k, context, upper, total, u)
            previous = upper
            lower = total
            k += 1

    def _residual(self, k: int, context: Past, upper: np.ndarray, total: float, u: float) -> Lookup:
        leak = 1.0 - total
        if leak > self.tol:
            raise NoResidualMass(
                f"u={u!r} fell in residual mass {leak:.3e} after level {k} (context {context_label(context)})")
        # float leak below tolerance: hand u to the last interval of the layout
        level = k
        while level >= 0:
            ctx = context[len(context) - level:] if level else ()
            below = self.cumulative(level - 1, ctx[1:]) if level else np.zeros_like(upper)
            increments = self.cumulative(level, ctx) - below
            for a in reversed(self.symbol_order):
                if increments[a - 1] > 0:
                    return Lookup(a, level)
            level -= 1
        raise NoResidualMass("partition has no mass")

    def mass_profile(self, past: Sequence[int], kmax: int) -> Tuple[List[float], float]:
        """Level masses for levels 0..min(kmax, len(past)) and the remaining residual"""
        n = len(past)
        masses = []
        lower = 0.0
        for k in range(min(kmax, n) + 1):
            context = tuple(past[n - k:]) if k else ()
            total = float(self.cumulative(k, context).sum())
            masses.append(total - lower)
            lower = total
        return masses, 1.0 - lower

    def dump_rows(self, depth: int, context_cap: int = 4096) -> List[Dict]:
        """Rows (context, symbol, range, length) for every context up to `depth`"""
        rows = []
        for k in range(depth + 1):
            contexts = all_contexts(k, self.kernel.alphabet_size)
            if len(contexts) > context_cap:
                logger.warning(f"dump stopped at depth {k - 1}: {len(contexts)} contexts exceed cap")
                break
            for context in contexts:
                lengths = self.level_lengths(k, context)
                for a in self.symbol_order:
                    rows.append({'context': context_label(context), 'symbol': a,
                                 'range': k, 'length': float(lengths[a - 1])})
        return rows

    def __repr__(self):
        return f"{type(self).__name__}({self.kernel.kernel_id})"


class CanonicalPartition(RangePartition):
    """I^(1): cumulative mass up to level k is the per-symbol infimum given the length-k context"""

    name = 'canonical'

    def _cumulative(self, k: int, context: Past) -> np.ndarray:
        return np.array(self.kernel.infima(context), dtype=float)

    def level0_interval(self, symbol: int) -> Tuple[float, float]:
        """[lo, hi) of I_0(symbol|empty past)"""
        lengths = self.cumulative(0, ())
        lo = 0.0
        for a in self.symbol_order:
            if a == symbol:
                return lo, lo + float(lengths[a - 1])
            lo += float(lengths[a - 1])
        raise ValueError(f"unknown symbol {symbol}")


class RenewalPartition(RangePartition):
    """
    I^(2) for the renewal kernel

    Level 0 holds alpha(2) for symbol 2 then alpha(1) for symbol 1; the rest of
    the mass sits at level t+1, t being the time since the latest 2.
    """

    name = 'renewal'

    def __init__(self, kernel: RenewalKernel, tol: float = DEFAULT_TOL):
        if not isinstance(kernel, RenewalKernel):
            raise InvalidKernel("renewal partition needs a renewal kernel")
        if kernel.alpha2 <= 0 or kernel.alpha1 <= 0:
            raise InvalidKernel("renewal partition needs alpha(1), alpha(2) > 0")
        super().__init__(kernel, tol)
        self.symbol_order = (2, 1)
        self._base = np.array([kernel.alpha1, kernel.alpha2])

    @property
    def alpha0(self) -> float:
        return float(self._base.sum())

    def _cumulative(self, k: int, context: Past) -> np.ndarray:
        t = RenewalKernel.age(context)
        if t is None:
            return self._base.copy()
        p = self.kernel.p_at(t)
        return np.array([1.0 - p, p])

    def is_complete(self, k: int, context: Past, total: float) -> bool:
        return RenewalKernel.age(context) is not None

    def locate(self, past: Sequence[int], u: float) -> Lookup:
        # only levels 0 and t+1 carry mass
        if u < self._base[1]:
            return Lookup(2, 0)
        if u < self.alpha0:
            return Lookup(1, 0)
        t = RenewalKernel.age(past)
        if t is None:
            raise PastTooShort(len(past) + 1)
        p = self.kernel.p_at(t)
        extra_two = p - self._base[1]
        if u < self.alpha0 + extra_two:
            return Lookup(2, t + 1)
        return Lookup(1 if 1.0 - p - self._base[0] > 0 else 2, t + 1)

    def contains_mark(self, u: float) -> bool:
        """u lies in I(2|empty past)"""
        return u < self._base[1]


class TruncatedPartition:
    """
    I^[k]: levels 0..k of the base partition, then leftover intervals of length
    P^[k](a|context) - sum_{j<=k}|I_j(a|context_j)| labelled with range k
    """

    def __init__(self, base: RangePartition, k: int, pk, tol: Optional[float] = None):
        if k < 0:
            raise ValueError("truncation order must be >= 0")
        if pk.k != k:
            raise ValueError(f"P^[{pk.k}] table given for truncation order {k}")
        self.base = base
        self.k = k
        self.pk = pk
        self.tol = base.tol if tol is None else tol
        self._leftovers: Dict[Past, np.ndarray] = {}
        self._lock = threading.Lock()
        self.clamped = 0

    def __getstate__(self):
        state = self.__dict__.copy()
        state['_leftovers'] = {}
        del state['_lock']
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.Lock()

    @property
    def kernel(self) -> Kernel:
        return self.base.kernel

    def leftover(self, context: Past) -> np.ndarray:
        cached = self._leftovers.get(context)
        if cached is not None:
            return cached
        row = np.asarray(self.pk.row(context), dtype=float)
        values = row - self.base.cumulative(self.k, context)
        worst = float(values.min())
        if worst < -self.tol:
            symbol = int(np.argmin(values)) + 1
            raise NegativeLeftover(context_label(context), symbol, worst)
        if worst < 0:
            logger.warning(f"clamped leftover {worst:.2e} to 0 for context {context_label(context)}")
            self.clamped += 1
            values = np.maximum(values, 0.0)
        values.setflags(write=False)
        with self._lock:
            self._leftovers.setdefault(context, values)
        return values

    def locate(self, past: Sequence[int], u: float) -> Lookup:
        n = len(past)
        previous = np.zeros(self.kernel.alphabet_size)
        lower = 0.0
        for j in range(self.k + 1):
            if j > n:
                raise PastTooShort(j)
            context = tuple(past[n - j:]) if j else ()
            upper = self.base.cumulative(j, context)
            total = float(upper.sum())
            if u < total:
                symbol = self.base._pick(lower, upper - previous, u)
                if symbol is not None:
                    return Lookup(symbol, j)
            previous = upper
            lower = total
        if n < self.k:
            raise PastTooShort(self.k)
        context = tuple(past[n - self.k:]) if self.k else ()
        extra = self.leftover(context)
        symbol = self.base._pick(lower, extra, u)
        if symbol is None:
            # leftover is empty up to float error; u sits on the top boundary
            return self.base._residual(self.k, context, previous, lower, min(u, lower))
        return Lookup(symbol, self.k)

    def __repr__(self):
        return f"TruncatedPartition({self.base!r}, k={self.k}, provenance={self.pk.provenance})"


def canonical_partition(kernel: Kernel, tol: float = DEFAULT_TOL) -> CanonicalPartition:
    return CanonicalPartition(kernel, tol)


def renewal_partition(kernel: RenewalKernel, tol: float = DEFAULT_TOL) -> RenewalPartition:
    return RenewalPartition(kernel, tol)


def default_partition(kernel: Kernel, tol: float = DEFAULT_TOL) -> RangePartition:
    """Renewal partition for renewal kernels, canonical otherwise"""
    if isinstance(kernel, RenewalKernel):
        return RenewalPartition(kernel, tol)
    return CanonicalPartition(kernel, tol)


def locate(partition, past: Sequence[int], u: float) -> Lookup:
    return partition.locate(past, u)


def truncate(partition: RangePartition, k: int, pk, tol: Optional[float] = None) -> TruncatedPartition:
    return TruncatedPartition(partition, k, pk, tol)


@dataclass
class LemmaReport:
    checked: int = 0
    violations: List[Dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def check_lemma_simple(partition: RangePartition, sample_contexts: Sequence[Past],
                       kmax: Optional[int] = None) -> LemmaReport:
    """
    Check sum_{i<=k}|I_i(a|context_i)| <= inf_z P(a|context_k z) for every suffix
    length k of every sampled context (up to kmax)
    """
    report = LemmaReport()
    for context in sample_contexts:
        context = tuple(context)
        depth = len(context) if kmax is None else min(kmax, len(context))
        for k in range(depth + 1):
            suffix = context[len(context) - k:] if k else ()
            lhs = partition.cumulative(k, suffix)
            rhs = partition.kernel.infima(suffix)
            report.checked += 1
            for a in partition.kernel.symbols:
                if lhs[a - 1] > rhs[a - 1] + partition.tol:
                    report.violations.append({'context': context_label(suffix), 'k': k, 'symbol': a,
                                              'partition_mass': float(lhs[a - 1]),
                                              'infimum': float(rhs[a - 1])})
    if report.violations:
        logger.warning(f"{partition!r}: {len(report.violations)} lemma violations in {report.checked} checks")
    return report
