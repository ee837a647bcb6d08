"""
Kernel Module
Transition-probability families P(a|past) over a finite alphabet {1..N}

Pasts are tuples in chronological order: past[-1] is the most recent symbol,
past[-k:] is the length-k context. The empty tuple is the empty past.
"""

import itertools
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import ContextSpaceTooLarge, InvalidKernel, UndeterminedProbability

logger = logging.getLogger(__name__)

Past = Tuple[int, ...]

NORMALIZATION_TOL = 1e-12


class ExtensionRule(str, Enum):
    EXACT = 'exact'
    INFIMUM = 'infimum'
    SUPREMUM = 'supremum'


def context_code(context: Sequence[int], alphabet_size: int) -> int:
    """Base-N index of a context, oldest symbol most significant"""
    code = 0
    for symbol in context:
        code = code * alphabet_size + (symbol - 1)
    return code


def all_contexts(length: int, alphabet_size: int) -> List[Past]:
    """Every context of the given length, in code order"""
    return list(itertools.product(range(1, alphabet_size + 1), repeat=length))


@dataclass
class AlphaSequence:
    """Continuity rates alpha_0..alpha_kmax of a kernel"""
    values: np.ndarray
    kernel_id: str = ''
    plateau: bool = False  # values past kmax repeat the last entry

    @property
    def kmax(self) -> int:
        return len(self.values) - 1

    def value(self, k: int) -> float:
        if k < 0:
            return 0.0
        if k <= self.kmax:
            return float(self.values[k])
        if self.plateau:
            return float(self.values[-1])
        raise IndexError(f"alpha_{k} not computed (kmax={self.kmax})")

    def reaches_one(self) -> bool:
        return bool(self.values[-1] >= 1.0 - NORMALIZATION_TOL)


class Kernel(ABC):
    """Common interface of all kernel families"""

    family: str = ''

    def __init__(self, alphabet_size: int, kernel_id: str = ''):
        if alphabet_size < 2:
            raise InvalidKernel(f"alphabet size must be >= 2, got {alphabet_size}")
        self.alphabet_size = alphabet_size
        self.kernel_id = kernel_id or self.family

    @property
    def symbols(self) -> range:
        return range(1, self.alphabet_size + 1)

    @property
    def order(self) -> Optional[int]:
        """Markov order, None for infinite order"""
        return None

    @abstractmethod
    def probs(self, past: Past, rule: ExtensionRule = ExtensionRule.EXACT) -> np.ndarray:
        """Per-symbol probabilities (index a-1) under the extension rule"""

    @abstractmethod
    def alpha(self, k: int) -> float:
        """alpha_k: infimum over length-k contexts of alpha_context"""

    def prob(self, a: int, past: Past, rule: ExtensionRule = ExtensionRule.EXACT) -> float:
        self._check_symbol(a)
        return float(self.probs(tuple(past), ExtensionRule(rule))[a - 1])

    def infima(self, context: Past) -> np.ndarray:
        """inf over extensions z of P(a|context z), for every a"""
        return self.probs(tuple(context), ExtensionRule.INFIMUM)

    def alpha_context(self, context: Past) -> float:
        return float(self.infima(context).sum())

    def _check_symbol(self, a: int):
        if not 1 <= a <= self.alphabet_size:
            raise ValueError(f"symbol {a} outside alphabet 1..{self.alphabet_size}")

    def _check_past(self, past: Past):
        for symbol in past:
            self._check_symbol(symbol)

    def __repr__(self):
        return f"{type(self).__name__}(id={self.kernel_id!r}, N={self.alphabet_size}, order={self.order})"


class FiniteOrderKernel(Kernel):
    """
    Kernel stored as a dense table over all contexts of length `order`

    Infima over extensions are minima over the rows sharing the given suffix,
    so alpha values are exact and monotone in the context length.
    """

    def __init__(self, table: np.ndarray, order: int, alphabet_size: int, kernel_id: str = ''):
        super().__init__(alphabet_size, kernel_id)
        table = np.asarray(table, dtype=float)
        expected = (alphabet_size ** order, alphabet_size)
        if table.shape != expected:
            raise InvalidKernel(f"table shape {table.shape} != {expected}")
        if np.any(table < 0):
            raise InvalidKernel("negative transition probability")
        row_sums = table.sum(axis=1)
        if np.any(np.abs(row_sums - 1.0) > NORMALIZATION_TOL):
            worst = float(np.max(np.abs(row_sums - 1.0)))
            raise InvalidKernel(f"rows do not sum to 1 (max deviation {worst:.2e})")
        self._order = order
        self.table = table
        self.table.setflags(write=False)
        self._alphas = np.array([self._alpha_from_table(k) for k in range(order + 1)])
        logger.debug(f"{self!r} built; alphas={np.round(self._alphas, 6).tolist()}")

    @property
    def order(self) -> int:
        return self._order

    def _suffix_view(self, k: int) -> np.ndarray:
        """Table reshaped to (N^(order-k), N^k, N): axis 0 runs over the free older symbols"""
        n = self.alphabet_size
        return self.table.reshape(n ** (self._order - k), n ** k, n)

    def _alpha_from_table(self, k: int) -> float:
        infima = self._suffix_view(k).min(axis=0)
        return float(min(1.0, infima.sum(axis=1).min()))

    def probs(self, past: Past, rule: ExtensionRule = ExtensionRule.EXACT) -> np.ndarray:
        past = tuple(past)
        self._check_past(past)
        rule = ExtensionRule(rule)
        m = self._order
        if len(past) >= m:
            return self.table[context_code(past[len(past) - m:], self.alphabet_size)].copy()
        if rule is ExtensionRule.EXACT:
            raise UndeterminedProbability(
                f"{self.kernel_id}: exact probability needs {m} symbols, got {len(past)}")
        rows = self._suffix_view(len(past))[:, context_code(past, self.alphabet_size), :]
        return rows.min(axis=0) if rule is ExtensionRule.INFIMUM else rows.max(axis=0)

    def alpha(self, k: int) -> float:
        if k < 0:
            return 0.0
        return float(self._alphas[min(k, self._order)])

    def row(self, context: Past) -> np.ndarray:
        return self.probs(context, ExtensionRule.EXACT)


class MarkovKernel(FiniteOrderKernel):
    """Order-m Markov kernel given by its transition table"""

    family = 'markov'

    @classmethod
    def from_rows(cls, order: int, rows: Mapping[Past, Sequence[float]],
                  alphabet_size: int = 2, kernel_id: str = '') -> 'MarkovKernel':
        """Build from {context: [P(1|ctx), ..., P(N|ctx)]}; every context of length `order` is required"""
        table = np.empty((alphabet_size ** order, alphabet_size))
        for context in all_contexts(order, alphabet_size):
            if context not in rows:
                raise InvalidKernel(f"missing row for context {context}")
            table[context_code(context, alphabet_size)] = rows[context]
        return cls(table, order, alphabet_size, kernel_id)


@dataclass
class Component:
    """Order-j component q_j of a mixture kernel"""
    order: int
    kind: str = 'uniform'
    rows: Optional[Dict[Past, Sequence[float]]] = None

    def probs(self, context: Past, alphabet_size: int) -> np.ndarray:
        """q_j(.|context) where context holds at least `order` symbols"""
        n = alphabet_size
        if self.kind == 'uniform' or (self.order == 0 and self.kind in ('copy', 'vote')):
            return np.full(n, 1.0 / n)
        if self.kind == 'copy':
            out = np.zeros(n)
            out[context[-self.order] - 1] = 1.0
            return out
        if self.kind == 'vote':
            if n != 2:
                raise InvalidKernel("vote components are binary")
            share = sum(1 for s in context[-self.order:] if s == 2) / self.order
            p2 = 0.2 + 0.6 * share
            return np.array([1.0 - p2, p2])
        if self.kind == 'table':
            key = tuple(context[len(context) - self.order:]) if self.order else ()
            return np.asarray(self.rows[key], dtype=float)
        raise InvalidKernel(f"unknown component kind '{self.kind}'")


class MixtureKernel(FiniteOrderKernel):
    """
    P(a|x) = sum_j lambda_j q_j(a|x_{-j}^{-1}), j = 0..K

    Stored as an order-K table. alpha_k >= lambda_0 + ... + lambda_k.
    """

    family = 'mixture'

    def __init__(self, weights: Sequence[float], components: Sequence[Component],
                 alphabet_size: int = 2, kernel_id: str = '', state_cap: int = 4096):
        weights = np.asarray(weights, dtype=float)
        if len(weights) != len(components):
            raise InvalidKernel("one component per weight is required")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > NORMALIZATION_TOL:
            raise InvalidKernel(f"weights must be >= 0 and sum to 1, got sum {weights.sum()!r}")
        for j, component in enumerate(components):
            if component.order != j:
                raise InvalidKernel(f"component {j} has order {component.order}")
        order = len(weights) - 1
        size = alphabet_size ** order
        if size > state_cap:
            raise ContextSpaceTooLarge(size, state_cap)

        self.weights = weights
        self.components = list(components)
        table = np.empty((size, alphabet_size))
        for context in all_contexts(order, alphabet_size):
            row = np.zeros(alphabet_size)
            for weight, component in zip(weights, components):
                if weight > 0:
                    row += weight * component.probs(context, alphabet_size)
            table[context_code(context, alphabet_size)] = row
        super().__init__(table, order, alphabet_size, kernel_id)

    @classmethod
    def of_family(cls, weights: Sequence[float], kind: str, alphabet_size: int = 2,
                  kernel_id: str = '', state_cap: int = 4096) -> 'MixtureKernel':
        components = [Component(order=j, kind=kind) for j in range(len(weights))]
        return cls(weights, components, alphabet_size, kernel_id, state_cap)

    def cumulative_weights(self) -> np.ndarray:
        """Lambda_k = lambda_0 + ... + lambda_k"""
        return np.cumsum(self.weights)


class RenewalKernel(Kernel):
    """
    Binary kernel driven by the time since the last 2

    P(2|past) = p_t with t = number of 1s after the latest 2. The sequence p is
    given by explicit values plus a tail rule: 'constant' repeats the last value,
    'periodic' cycles through all values.
    """

    family = 'renewal'

    def __init__(self, p: Sequence[float], tail: str = 'constant', kernel_id: str = ''):
        super().__init__(2, kernel_id)
        p = np.asarray(p, dtype=float)
        if p.ndim != 1 or len(p) == 0:
            raise InvalidKernel("renewal kernel needs at least one p value")
        if tail not in ('constant', 'periodic'):
            raise InvalidKernel(f"unknown tail rule '{tail}'")
        if np.any(p <= 0) or np.any(p >= 1):
            raise InvalidKernel("renewal p values must lie strictly inside (0, 1)")
        self.p = p
        self.p.setflags(write=False)
        self.tail = tail
        if self.epsilon <= 0:
            raise InvalidKernel("renewal kernel violates the epsilon bound")
        logger.debug(f"{self!r} built; alpha(1)={self.alpha1:.4f} alpha(2)={self.alpha2:.4f}")

    def p_at(self, i: int) -> float:
        if i < 0:
            raise ValueError("age must be >= 0")
        if self.tail == 'periodic':
            return float(self.p[i % len(self.p)])
        return float(self.p[min(i, len(self.p) - 1)])

    def p_array(self, n: int) -> np.ndarray:
        """p_0..p_{n-1}"""
        idx = np.arange(n)
        if self.tail == 'periodic':
            return self.p[idx % len(self.p)]
        return self.p[np.minimum(idx, len(self.p) - 1)]

    def tail_values(self, k: int) -> np.ndarray:
        """{p_l : l >= k}, which is finite under both tail rules"""
        if self.tail == 'periodic':
            return self.p
        return self.p[min(k, len(self.p) - 1):]

    @property
    def alpha1(self) -> float:
        """inf_i (1 - p_i)"""
        return float(1.0 - self.p.max())

    @property
    def alpha2(self) -> float:
        """inf_i p_i"""
        return float(self.p.min())

    @property
    def epsilon(self) -> float:
        return min(self.alpha1, self.alpha2)

    @staticmethod
    def age(past: Past) -> Optional[int]:
        """Number of 1s after the latest 2, None when the past holds no 2"""
        for lag, symbol in enumerate(reversed(past)):
            if symbol == 2:
                return lag
        return None

    def probs(self, past: Past, rule: ExtensionRule = ExtensionRule.EXACT) -> np.ndarray:
        past = tuple(past)
        self._check_past(past)
        rule = ExtensionRule(rule)
        t = self.age(past)
        if t is not None:
            p2 = self.p_at(t)
            return np.array([1.0 - p2, p2])
        values = self.tail_values(len(past))
        lo, hi = float(values.min()), float(values.max())
        if rule is ExtensionRule.EXACT:
            if lo != hi:
                raise UndeterminedProbability(
                    f"{self.kernel_id}: all-1 past of length {len(past)} leaves P(2|.) in [{lo}, {hi}]")
            return np.array([1.0 - lo, lo])
        if rule is ExtensionRule.INFIMUM:
            return np.array([1.0 - hi, lo])
        return np.array([1.0 - lo, hi])

    def alpha(self, k: int) -> float:
        if k < 0:
            return 0.0
        values = self.tail_values(k)
        return float(1.0 - (values.max() - values.min()))

    def alpha_limit(self) -> float:
        """lim alpha_k; below 1 means the kernel is discontinuous at the all-1 past"""
        return self.alpha(len(self.p))


def alpha_context_bruteforce(kernel: Kernel, context: Past, depth: int) -> float:
    """
    sum_a min over all extensions of length `depth` of P(a|z context)

    Brute-force oracle for tests; exact whenever depth resolves the kernel.
    """
    n = kernel.alphabet_size
    infima = np.full(n, np.inf)
    for extension in itertools.product(range(1, n + 1), repeat=depth):
        past = tuple(extension) + tuple(context)
        try:
            row = kernel.probs(past, ExtensionRule.EXACT)
        except UndeterminedProbability:
            row = kernel.probs(past, ExtensionRule.INFIMUM)
        infima = np.minimum(infima, row)
    return float(infima.sum())


def alpha_seq(kernel: Kernel, kmax: int, context_cap: int = 2 ** 16) -> AlphaSequence:
    """
    alpha_0..alpha_kmax of a kernel

    Finite-order kernels enumerate contexts up to their order (guarded by
    context_cap); the renewal family uses its closed form.
    """
    if kmax < 0:
        raise ValueError("kmax must be >= 0")
    order = kernel.order
    if order is not None:
        size = kernel.alphabet_size ** min(kmax, order)
        if size > context_cap:
            raise ContextSpaceTooLarge(size, context_cap)
    values = np.array([kernel.alpha(k) for k in range(kmax + 1)])
    # monotone by construction; guard against a family implementation slip
    if np.any(np.diff(values) < -NORMALIZATION_TOL):
        raise InvalidKernel(f"{kernel.kernel_id}: alpha sequence decreases")
    plateau = order is not None and kmax >= order
    if isinstance(kernel, RenewalKernel):
        plateau = kmax >= len(kernel.p)
    return AlphaSequence(values=values, kernel_id=kernel.kernel_id, plateau=plateau)
