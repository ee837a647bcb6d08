"""
Coupling From The Past
Uniform streams, forward updates, coalescence detectors, reconstruction and
coupled simulation of a chain with its k-step Markov approximation

Times are integers <= 0. A detector called with span s returns a time theta
such that the run from theta, started from any past, is the same at every time
in [-s, 0]; a single forward run from theta is then an exact stationary
trajectory over that window.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .errors import (CoalescenceViolation, ContextSpaceTooLarge, InvalidKernel,
                     PastTooShort, WindowCapExceeded)
from .kernel import Kernel, RenewalKernel, all_contexts
from .partition import (CanonicalPartition, RangePartition, RenewalPartition,
                        TruncatedPartition, default_partition)

logger = logging.getLogger(__name__)

DEFAULT_WINDOW_CAP = 2 ** 20
DEFAULT_PROBES = 10
DEFAULT_PROBE_DEPTH = 64
_SEED_MASK = (1 << 64) - 1


class UniformStream:
    """
    U_i for every integer time i, a pure function of (seed, i)

    Values come from numpy's counter-based Philox generator: block b of
    BLOCK uniforms is generated from a counter placed at b, so blocks can be
    drawn in any order and re-reading an index always returns the same value.
    """

    BLOCK = 4096
    _OFFSET = 1 << 62

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._key = self.seed % (1 << 128)
        self._blocks: Dict[int, np.ndarray] = {}

    def _block(self, b: int) -> np.ndarray:
        block = self._blocks.get(b)
        if block is None:
            counter = (b + self._OFFSET) * (self.BLOCK // 4)
            generator = np.random.Generator(np.random.Philox(key=self._key, counter=counter))
            block = generator.random(self.BLOCK)
            block.setflags(write=False)
            self._blocks[b] = block
        return block

    def __getitem__(self, i: int) -> float:
        b, offset = divmod(int(i), self.BLOCK)
        return float(self._block(b)[offset])

    def window(self, lo: int, hi: int) -> np.ndarray:
        """U_lo..U_hi inclusive"""
        if hi < lo:
            return np.empty(0)
        out = np.empty(hi - lo + 1)
        i = lo
        while i <= hi:
            b, offset = divmod(i, self.BLOCK)
            take = min(self.BLOCK - offset, hi - i + 1)
            out[i - lo:i - lo + take] = self._block(b)[offset:offset + take]
            i += take
        return out

    def __repr__(self):
        return f"UniformStream(seed={self.seed})"


def stream(seed: int) -> UniformStream:
    return UniformStream(seed)


@dataclass
class CoalescenceResult:
    theta0: int
    method: str
    window_used: int


@dataclass
class UpdateResult:
    symbols: Tuple[int, ...]
    ranges: Tuple[int, ...]

    @property
    def last(self) -> int:
        return self.symbols[-1]


def apply_update(partition, past: Sequence[int], uniforms: UniformStream, m: int, n: int) -> UpdateResult:
    """F_{m,n}: run the update function over times m..n starting from `past`"""
    if m > n:
        raise ValueError(f"empty update window [{m}, {n}]")
    history = list(past)
    start = len(history)
    ranges = []
    for u in uniforms.window(m, n):
        try:
            lookup = partition.locate(history, u)
        except PastTooShort as exc:
            raise PastTooShort(start + exc.needed - len(history)) from None
        history.append(lookup.symbol)
        ranges.append(lookup.range)
    return UpdateResult(tuple(history[start:]), tuple(ranges))


# detectors

def alpha_thresholds(kernel: Kernel) -> np.ndarray:
    """alpha_0..alpha_K where alpha_j = alpha_K for all j >= K"""
    if kernel.order is not None:
        depth = kernel.order
    elif isinstance(kernel, RenewalKernel):
        depth = len(kernel.p)
    else:
        raise InvalidKernel(f"{kernel!r}: no finite description of the alpha sequence")
    return np.array([kernel.alpha(j) for j in range(depth + 1)])


def _requirements(uniforms: np.ndarray, thresholds: np.ndarray, shift: int = 0) -> np.ndarray:
    """min{d >= 0 : u < alpha_{d+shift}} per uniform, inf when u is above the plateau"""
    first = np.searchsorted(thresholds, uniforms, side='right').astype(float)
    first[first >= len(thresholds)] = np.inf
    return np.maximum(first - shift, 0.0)


def _latest_start(requirements: np.ndarray, lo: int, latest: int) -> Optional[int]:
    """Largest i <= latest with j - r_j >= i for every j in [i, origin]; r covers lo..origin"""
    idx = np.arange(lo, lo + len(requirements))
    slack = idx - requirements
    running = np.minimum.accumulate(slack[::-1])[::-1]
    ok = (idx <= running) & (idx <= latest)
    if not ok.any():
        return None
    return int(idx[np.nonzero(ok)[0][-1]])


def _grow(origin: int, span: int, cap: int, search: Callable[[int], Optional[int]]) -> Tuple[int, int]:
    width = 1
    while True:
        found = search(origin - span - width)
        if found is not None:
            return found, width
        if width >= cap:
            raise WindowCapExceeded(cap)
        width = min(2 * width, cap)


def _theta_threshold(uniforms: UniformStream, thresholds: np.ndarray, origin: int, span: int,
                     shift: int, cap: int) -> Tuple[int, int]:
    def search(lo):
        values = uniforms.window(lo, origin)
        return _latest_start(_requirements(values, thresholds, shift), lo, origin - span)
    return _grow(origin, span, cap, search)


def theta_prime(partition: RangePartition, uniforms: UniformStream, span: int = 0,
                window_cap: int = DEFAULT_WINDOW_CAP) -> CoalescenceResult:
    """
    Coalescence time from the uniform bounds on the range function

    Canonical partition: max{i : U_j < alpha_{j-i} for j in [i, 0]}.
    Renewal partition: the latest U_i in I(2|empty past).
    """
    if isinstance(partition, RenewalPartition):
        alpha2 = partition.kernel.alpha2

        def search(lo):
            values = uniforms.window(lo, -span)
            marks = np.nonzero(values < alpha2)[0]
            return int(lo + marks[-1]) if len(marks) else None

        theta, width = _grow(0, span, window_cap, search)
        return CoalescenceResult(theta, 'renewal_last2', width)
    if isinstance(partition, CanonicalPartition):
        thresholds = alpha_thresholds(partition.kernel)
        theta, width = _theta_threshold(uniforms, thresholds, 0, span, 0, window_cap)
        return CoalescenceResult(theta, 'theta_prime', width)
    raise TypeError(f"theta_prime needs a canonical or renewal partition, got {partition!r}")


def kstar(kernel: Kernel) -> int:
    """min{k : alpha_k > 0}"""
    thresholds = alpha_thresholds(kernel)
    positive = np.nonzero(thresholds > 0)[0]
    if not len(positive):
        raise InvalidKernel(f"{kernel!r} has alpha_k = 0 for every k")
    return int(positive[0])


def _coalesces(partition: CanonicalPartition, block: np.ndarray, k_star: int) -> bool:
    """Block belongs to E_m: the last k_star symbols agree from every starting context"""
    finals = set()
    for context in all_contexts(k_star, partition.kernel.alphabet_size):
        history = list(context)
        for u in block:
            history.append(partition.locate(history, u).symbol)
        finals.add(tuple(history[-k_star:]))
        if len(finals) > 1:
            return False
    return True


def theta_vwnn(partition: CanonicalPartition, uniforms: UniformStream, k_star: Optional[int] = None,
               span: int = 0, window_cap: int = DEFAULT_WINDOW_CAP,
               context_cap: int = 256) -> CoalescenceResult:
    """
    Coalescence time Y_Q built from the times W_i, Y_i

    W_1 is the latest m <= -span with U_j < alpha_{j-m+k*} on [m, 0]; Y_i is the
    latest index before W_i with U >= alpha_{k*}; W_{i+1} repeats the W rule
    anchored at Y_i. Q is the first i whose block U_{Y_i+1}..U_{W_i-1} makes
    every starting context of length k* produce the same last k* symbols.
    """
    if not isinstance(partition, CanonicalPartition):
        raise TypeError("the W/Y/Q detector runs on the canonical partition")
    kernel = partition.kernel
    thresholds = alpha_thresholds(kernel)
    if k_star is None:
        k_star = kstar(kernel)
    if kernel.alphabet_size ** k_star > context_cap:
        raise ContextSpaceTooLarge(kernel.alphabet_size ** k_star, context_cap)

    w, width = _theta_threshold(uniforms, thresholds, 0, span, k_star, window_cap)
    if k_star == 0:
        # E_1 is all of level 0, and U_{W_1} < alpha_0 by construction
        return CoalescenceResult(w, 'vwnn_WYQ', width)

    bar = thresholds[min(k_star, len(thresholds) - 1)]
    if bar >= 1.0:
        # no U reaches alpha_{k*}, so Y_1 never exists; test blocks ending at W_1 - 1 of doubling length
        length = k_star + 1
        while length <= window_cap + w:
            if _coalesces(partition, uniforms.window(w - length, w - 1), k_star):
                return CoalescenceResult(w - length - 1, 'vwnn_WYQ', length - w + 1)
            length *= 2
        raise WindowCapExceeded(window_cap)

    blocks = 0
    while True:
        y = w - 1
        while uniforms[y] < bar:
            y -= 1
            if -y > window_cap:
                raise WindowCapExceeded(window_cap)
        blocks += 1
        length = w - y - 1
        if length >= k_star + 1 and _coalesces(partition, uniforms.window(y + 1, w - 1), k_star):
            logger.debug(f"vwnn coalescence at Y={y} after {blocks} blocks")
            return CoalescenceResult(y, 'vwnn_WYQ', -y)
        w, _ = _theta_threshold(uniforms, thresholds, y, 0, k_star, window_cap)
        if -w > window_cap:
            raise WindowCapExceeded(window_cap)


def _ell_values(partition: CanonicalPartition, values: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """ell at every index of a window, with N(U) taken inside the window (inf if no mark)"""
    lo_mark, hi_mark = partition.level0_interval(2)
    marks = (values >= lo_mark) & (values < hi_mark)
    positions = np.where(marks, np.arange(len(values)), -1)
    last_mark = np.maximum.accumulate(positions)
    before = np.empty(len(values), dtype=np.int64)
    before[0] = -1
    before[1:] = last_mark[:-1]
    gap = np.where(before >= 0, np.arange(len(values)) - before, np.inf).astype(float)
    return np.minimum(gap, _requirements(values, thresholds))


def theta_ell(partition: CanonicalPartition, uniforms: UniformStream, span: int = 0,
              window_cap: int = DEFAULT_WINDOW_CAP) -> CoalescenceResult:
    """
    sup{j : ell(U up to i) <= i - j for i = j..0} on a renewal kernel

    ell(U up to i) is the least j with U_i < A_j, where A_j = alpha_j(1^j) until a
    uniform in I(2|empty past) shows up among the j previous ones, and 1 after.
    """
    if not isinstance(partition, CanonicalPartition) or not isinstance(partition.kernel, RenewalKernel):
        raise TypeError("theta_ell needs the canonical partition of a renewal kernel")
    thresholds = alpha_thresholds(partition.kernel)

    def search(lo):
        values = uniforms.window(lo, 0)
        return _latest_start(_ell_values(partition, values, thresholds), lo, -span)

    theta, width = _grow(0, span, window_cap, search)
    return CoalescenceResult(theta, 'ell_based', width)


def ell_at_zero(partition: CanonicalPartition, uniforms: UniformStream, limit: int) -> float:
    """ell(U up to 0), capped: returns inf when it exceeds `limit`"""
    thresholds = alpha_thresholds(partition.kernel)
    values = uniforms.window(-limit - 1, 0)
    value = _ell_values(partition, values, thresholds)[-1]
    return float(value) if value <= limit else float('inf')


def select_detector(partition) -> Callable[..., CoalescenceResult]:
    """Cheapest valid detector for a partition"""
    if isinstance(partition, RenewalPartition):
        return theta_prime
    if isinstance(partition, CanonicalPartition):
        kernel = partition.kernel
        if isinstance(kernel, RenewalKernel) and kernel.alpha_limit() < 1.0:
            return theta_ell
        if kernel.alpha(0) > 0:
            return theta_prime
        return theta_vwnn
    raise TypeError(f"no detector for {partition!r}")


# reconstruction

def _probe_pasts(alphabet_size: int, depth: int, count: int, seed: int, theta0: int) -> List[List[int]]:
    rng = np.random.default_rng([seed & _SEED_MASK, abs(theta0)])
    pasts = [list(rng.integers(1, alphabet_size + 1, size=depth)) for _ in range(count)]
    pasts.append([1] * depth)
    pasts.append([2] * depth)
    return pasts


def _run_from(partition, probe: List[int], uniforms: UniformStream, theta0: int, end: int,
              filler: Callable[[int], List[int]], cap: int) -> UpdateResult:
    while True:
        try:
            return apply_update(partition, probe, uniforms, theta0, end)
        except PastTooShort as exc:
            missing = exc.needed - len(probe)
            if len(probe) + missing > cap:
                raise WindowCapExceeded(cap) from None
            probe = filler(missing) + probe


def _filler_for(probe: List[int], rng: np.random.Generator, alphabet_size: int) -> Callable[[int], List[int]]:
    if len(set(probe)) == 1:
        symbol = probe[0]
        return lambda n: [symbol] * n
    return lambda n: list(rng.integers(1, alphabet_size + 1, size=n))


def reconstruct(partition, uniforms: UniformStream, theta0: int, n_window: int = DEFAULT_PROBE_DEPTH,
                probes: int = DEFAULT_PROBES, end: int = 0,
                window_cap: int = DEFAULT_WINDOW_CAP) -> UpdateResult:
    """
    Phi: the sample over [theta0, end] built from theta0

    Runs from `probes` random pasts and the constant pasts 1... and 2... of
    length n_window; raises CoalescenceViolation unless every run agrees.
    """
    alphabet_size = partition.kernel.alphabet_size
    pasts = _probe_pasts(alphabet_size, n_window, probes, uniforms.seed, theta0)
    rng = np.random.default_rng([uniforms.seed & _SEED_MASK, abs(theta0), 1])
    reference = None
    for index, probe in enumerate(pasts):
        result = _run_from(partition, probe, uniforms, theta0, end,
                           _filler_for(probe, rng, alphabet_size), window_cap)
        if reference is None:
            reference = result
        elif result.symbols != reference.symbols:
            where = next(i for i, (a, b) in enumerate(zip(result.symbols, reference.symbols)) if a != b)
            raise CoalescenceViolation(
                f"{partition!r}: probe {index} differs at time {theta0 + where} (theta0={theta0}, seed={uniforms.seed})")
    return reference


def perfect_sample(partition, seed: int, n: int, window_cap: int = DEFAULT_WINDOW_CAP,
                   probe_depth: int = DEFAULT_PROBE_DEPTH) -> np.ndarray:
    """n consecutive stationary symbols (times -n+1..0)"""
    if n < 1:
        raise ValueError("n must be >= 1")
    uniforms = UniformStream(seed)
    detector = select_detector(partition)
    theta = detector(partition, uniforms, span=n - 1, window_cap=window_cap).theta0
    probe = _probe_pasts(partition.kernel.alphabet_size, probe_depth, 1, seed, theta)[0]
    rng = np.random.default_rng([seed & _SEED_MASK, abs(theta), 2])
    result = _run_from(partition, probe, uniforms, theta, 0,
                       _filler_for(probe, rng, partition.kernel.alphabet_size), window_cap)
    return np.asarray(result.symbols[-n:], dtype=np.int8)


# coupled chains

@dataclass
class CouplingTrace:
    """Coupled run of a chain (x) and its k-step approximation (xk) on one stream"""
    seed: int
    k: int
    theta0: int
    method: str
    x: np.ndarray
    xk: np.ndarray
    ranges: np.ndarray
    ranges_k: np.ndarray
    n_steps: int

    @property
    def start(self) -> int:
        """Time of the first recorded step of the window"""
        return -self.n_steps + 1

    def window(self, values: np.ndarray) -> np.ndarray:
        return values[-self.n_steps:]

    @property
    def disagreements(self) -> np.ndarray:
        """Times in the window where x and xk differ"""
        diff = np.nonzero(self.window(self.x) != self.window(self.xk))[0]
        return diff + self.start

    @property
    def n_disagree(self) -> int:
        return int(np.count_nonzero(self.window(self.x) != self.window(self.xk)))

    def key_bound_consistent(self) -> bool:
        """Every disagreement is preceded (from theta0 on) by a step of range > k"""
        exceeded = np.maximum.accumulate(self.ranges > self.k)
        differs = self.x != self.xk
        return bool(np.all(~differs | exceeded))

    def stationarity_pvalues(self) -> Tuple[float, float]:
        """Chi-square homogeneity p-values (x, xk) of symbol counts between window halves"""
        return (_halves_pvalue(self.window(self.x)), _halves_pvalue(self.window(self.xk)))

    def to_rows(self) -> List[Dict]:
        x, xk = self.window(self.x), self.window(self.xk)
        ranges = self.window(self.ranges)
        return [{'seed': self.seed, 'i': self.start + j, 'x': int(x[j]), 'xk': int(xk[j]),
                 'range': int(ranges[j]), 'disagree': int(x[j] != xk[j])}
                for j in range(self.n_steps)]


def _halves_pvalue(values: np.ndarray) -> float:
    half = len(values) // 2
    if half < 2:
        return 1.0
    symbols = np.unique(values)
    if len(symbols) < 2:
        return 1.0
    table = np.array([[np.count_nonzero(part == s) for s in symbols]
                      for part in (values[:half], values[half:2 * half])])
    return float(stats.chi2_contingency(table)[1])


def truncated_coalesces(truncated: TruncatedPartition, uniforms: UniformStream, theta0: int, start: int) -> bool:
    """Runs of the order-k chain from every length-k context at theta0 agree on [start, 0]"""
    k = truncated.k
    finals = set()
    for context in all_contexts(k, truncated.kernel.alphabet_size):
        run = apply_update(truncated, list(context), uniforms, theta0, 0)
        finals.add(run.symbols[start - theta0:])
        if len(finals) > 1:
            return False
    return True


def _cover_truncated(partition: CanonicalPartition, truncated: TruncatedPartition, uniforms: UniformStream,
                     detector: Callable[..., CoalescenceResult], theta: int, n_steps: int,
                     window_cap: int) -> int:
    """Earlier W/Y/Q time from which the truncated chain also coalesces on the window"""
    start = -(n_steps - 1)
    while not truncated_coalesces(truncated, uniforms, theta, start):
        span = 1 - 2 * theta
        if span > window_cap:
            raise WindowCapExceeded(window_cap)
        theta = detector(partition, uniforms, span=span, window_cap=window_cap).theta0
    logger.debug(f"truncated chain (k={truncated.k}) coalesces from {theta}")
    return theta


def coupled_sample(kernel: Kernel, k: int, seed: int, n_steps: int,
                   partition: Optional[RangePartition] = None,
                   truncated: Optional[TruncatedPartition] = None,
                   detector: Optional[Callable[..., CoalescenceResult]] = None,
                   window_cap: int = DEFAULT_WINDOW_CAP,
                   probe_depth: int = DEFAULT_PROBE_DEPTH,
                   validate: bool = False) -> CouplingTrace:
    """
    Coupled stationary run of X and X^[k] over times -n_steps+1..0

    Both chains read the same uniforms from a common coalescence time of the
    full partition. Its uniform range bounds make it a coalescence time of the
    truncated chain too, except for the W/Y/Q detector with 0 < k < k*: there
    the truncated chain reads only leftover intervals, so theta is pushed back
    until its runs from every length-k context agree on the window.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if partition is None:
        partition = default_partition(kernel)
    if truncated is None:
        from .markov_approx import canonical_table
        truncated = TruncatedPartition(partition, k, canonical_table(kernel, k))
    if detector is None:
        detector = select_detector(partition)

    uniforms = UniformStream(seed)
    found = detector(partition, uniforms, span=n_steps - 1, window_cap=window_cap)
    theta = found.theta0
    if detector is theta_vwnn and 0 < k < kstar(kernel):
        theta = _cover_truncated(partition, truncated, uniforms, detector, theta, n_steps, window_cap)
    depth = max(probe_depth, k)
    probe = _probe_pasts(kernel.alphabet_size, depth, 1, seed, theta)[0]
    rng = np.random.default_rng([seed & _SEED_MASK, abs(theta), 3])
    filler = _filler_for(probe, rng, kernel.alphabet_size)
    full = _run_from(partition, probe, uniforms, theta, 0, filler, window_cap)
    approx = _run_from(truncated, probe, uniforms, theta, 0, filler, window_cap)

    if validate:
        for part, run in ((partition, full), (truncated, approx)):
            checked = reconstruct(part, uniforms, theta, n_window=depth, window_cap=window_cap)
            if checked.symbols != run.symbols:
                raise CoalescenceViolation(f"{part!r}: coupled run depends on the probe past")

    return CouplingTrace(seed=seed, k=k, theta0=theta, method=found.method,
                         x=np.asarray(full.symbols, dtype=np.int8),
                         xk=np.asarray(approx.symbols, dtype=np.int8),
                         ranges=np.asarray(full.ranges, dtype=np.int64),
                         ranges_k=np.asarray(approx.ranges, dtype=np.int64),
                         n_steps=n_steps)
