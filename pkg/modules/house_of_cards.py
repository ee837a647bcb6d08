"""
House of Cards
The chain on {0, 1, 2, ...} that climbs from i to i+1 with probability r_i and
falls back to 0 otherwise. v_k = P(H_k = 0 | H_0 = 0) by dynamic programming,
by the composition sum and by Monte Carlo, the return-time law, and the
explicit decay bounds on v_k.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .errors import CrTooLarge, InvalidR, InvalidSpec, KTooLarge
from .estimates import McEstimate, wilson

logger = logging.getLogger(__name__)

PRUNE_BELOW = 1e-300
COMBINATORIAL_KMAX = 20
NONSUMMABLE_R_LIMIT = math.sqrt(2.0) - 1.0
CALIBRATION_RANGE = (16, 64)
TAIL_PRODUCT_HORIZON = 10 ** 6


class HocSpec:
    """
    Nondecreasing climb probabilities r_0, r_1, ...

    Families:
        constant(r)         r_k = r
        exponential(C, rho) 1 - r_k = C rho^(k+1)
        harmonic(r)         1 - r_k = r/k for k >= 1, r_0 = r_1
        power(c, a)         1 - r_k = min(1, c (k+1)^-a)
        sequence(values)    explicit values, the last one repeated
    """

    def __init__(self, kind: str, params: Sequence[float] = (), values: Optional[Sequence[float]] = None):
        self.kind = kind
        self.params = tuple(float(p) for p in params)
        self.values = None if values is None else np.asarray(values, dtype=float)
        self._validate()

    def _validate(self):
        kind, params = self.kind, self.params
        if kind == 'constant':
            if not 0.0 <= params[0] <= 1.0:
                raise InvalidSpec(f"constant r={params[0]} outside [0, 1]")
        elif kind == 'exponential':
            c, rho = params
            if c <= 0 or not 0 < rho < 1 or c * rho > 1:
                raise InvalidSpec(f"exponential family needs C > 0, 0 < rho < 1, C*rho <= 1 (C={c}, rho={rho})")
        elif kind == 'harmonic':
            if not 0 < params[0] <= 1:
                raise InvalidSpec(f"harmonic r={params[0]} outside (0, 1]")
        elif kind == 'power':
            c, a = params
            if c <= 0 or a <= 0:
                raise InvalidSpec("power family needs c > 0 and a > 0")
        elif kind == 'sequence':
            if self.values is None or len(self.values) == 0:
                raise InvalidSpec("sequence family needs values")
            if np.any(self.values < 0) or np.any(self.values > 1):
                raise InvalidSpec("r values must lie in [0, 1]")
            if np.any(np.diff(self.values) < 0):
                raise InvalidSpec("r values must be nondecreasing")
        else:
            raise InvalidSpec(f"unknown house-of-cards family '{kind}'")

    @classmethod
    def constant(cls, r: float) -> 'HocSpec':
        return cls('constant', (r,))

    @classmethod
    def exponential(cls, c_r: float, rho: float) -> 'HocSpec':
        return cls('exponential', (c_r, rho))

    @classmethod
    def harmonic(cls, r: float) -> 'HocSpec':
        return cls('harmonic', (r,))

    @classmethod
    def power(cls, c: float, a: float) -> 'HocSpec':
        return cls('power', (c, a))

    @classmethod
    def from_sequence(cls, values: Sequence[float]) -> 'HocSpec':
        return cls('sequence', values=values)

    @classmethod
    def parse(cls, text: str) -> 'HocSpec':
        """'const:0.5', 'exp:0.5,0.1', 'harmonic:0.2', 'power:0.5,2' or 'seq:0.1,0.5,0.9'"""
        name, _, rest = text.partition(':')
        try:
            numbers = [float(x) for x in rest.split(',') if x.strip()]
        except ValueError:
            raise InvalidSpec(f"cannot parse r spec '{text}'") from None
        builders = {'const': (cls.constant, 1), 'exp': (cls.exponential, 2),
                    'harmonic': (cls.harmonic, 1), 'power': (cls.power, 2)}
        if name == 'seq':
            return cls.from_sequence(numbers)
        if name not in builders:
            raise InvalidSpec(f"unknown r spec '{name}' (expected const, exp, harmonic, power or seq)")
        builder, arity = builders[name]
        if len(numbers) != arity:
            raise InvalidSpec(f"'{name}' takes {arity} parameter(s), got {len(numbers)}")
        return builder(*numbers)

    @property
    def label(self) -> str:
        if self.kind == 'sequence':
            return 'seq:' + ','.join(f"{v:g}" for v in self.values)
        short = {'constant': 'const', 'exponential': 'exp'}.get(self.kind, self.kind)
        return f"{short}:" + ','.join(f"{p:g}" for p in self.params)

    def r_array(self, n: int) -> np.ndarray:
        """r_0..r_{n-1}"""
        k = np.arange(n, dtype=float)
        if self.kind == 'constant':
            return np.full(n, self.params[0])
        if self.kind == 'exponential':
            c, rho = self.params
            return 1.0 - c * rho ** (k + 1)
        if self.kind == 'harmonic':
            return 1.0 - self.params[0] / np.maximum(k, 1.0)
        if self.kind == 'power':
            c, a = self.params
            return 1.0 - np.minimum(1.0, c * (k + 1) ** -a)
        idx = np.minimum(np.arange(n), len(self.values) - 1)
        return self.values[idx]

    def r(self, k: int) -> float:
        return float(self.r_array(k + 1)[k])

    def survival(self, n: int) -> np.ndarray:
        """S_m = P(I > m) = prod_{i<m} r_i for m = 0..n"""
        out = np.ones(n + 1)
        out[1:] = np.cumprod(self.r_array(n))
        return out

    def t_array(self, n: int) -> np.ndarray:
        """t_1..t_n with t_k = P(I = k) = (1 - r_{k-1}) prod_{i<=k-2} r_i"""
        s = self.survival(n)
        return s[:-1] * (1.0 - self.r_array(n))

    def nu(self, n: int) -> float:
        """nu_n = sum_{m>=n} t_m + t_inf = P(I >= n)"""
        if n <= 1:
            return 1.0
        return float(self.survival(n - 1)[-1])

    def summable(self) -> bool:
        """sum_k (1 - r_k) < infinity"""
        if self.kind == 'constant':
            return self.params[0] == 1.0
        if self.kind == 'exponential':
            return True
        if self.kind == 'harmonic':
            return False
        if self.kind == 'power':
            return self.params[1] > 1
        return bool(self.values[-1] == 1.0)

    def t_infinity(self) -> float:
        """t_inf = prod_i r_i, the probability of never returning"""
        if not self.summable():
            return 0.0
        if self.kind == 'constant':
            return 1.0
        if self.kind == 'sequence':
            return float(np.prod(self.values))
        if self.kind == 'power':
            horizon = TAIL_PRODUCT_HORIZON
        else:
            c, rho = self.params
            # factors beyond the horizon differ from 1 by less than 1e-17
            horizon = max(2, int(math.log(1e-17 / c) / math.log(rho)) + 2)
        r = self.r_array(horizon)
        if np.any(r <= 0):
            return 0.0
        log_product = float(np.sum(np.log(r)))
        if self.kind == 'power':
            c, a = self.params
            log_product -= c * horizon ** (1 - a) / (a - 1)
        return math.exp(log_product)

    def sample_return_times(self, size, rng: np.random.Generator, cap: int = 10 ** 6) -> np.ndarray:
        """i.i.d. return times to 0 (inf for no return within cap steps)"""
        s = self.survival(cap)
        u = rng.random(size)
        # I = min{m : S_m < u}; S is nonincreasing
        index = np.searchsorted(-s, -u, side='right').astype(float)
        index[index > cap] = np.inf
        return index

    def __repr__(self):
        return f"HocSpec({self.label})"


@dataclass
class VkSequence:
    values: np.ndarray
    label: str = ''

    @property
    def kmax(self) -> int:
        return len(self.values) - 1

    def __getitem__(self, k: int) -> float:
        return float(self.values[k])


def vk_dp(spec: HocSpec, kmax: int) -> VkSequence:
    """Forward recursion on the law of H_k; states below PRUNE_BELOW are dropped"""
    if kmax < 0:
        raise ValueError("kmax must be >= 0")
    r = spec.r_array(kmax + 1)
    fall = 1.0 - r
    law = np.zeros(kmax + 2)
    law[0] = 1.0
    top = 0
    v = np.empty(kmax + 1)
    v[0] = 1.0
    for k in range(1, kmax + 1):
        mass = law[:top + 1]
        returned = float(np.dot(mass, fall[:top + 1]))
        law[1:top + 2] = mass * r[:top + 1]
        law[0] = returned
        top += 1
        while top > 0 and law[top] < PRUNE_BELOW:
            law[top] = 0.0
            top -= 1
        v[k] = returned
    return VkSequence(values=v, label=spec.label)


def vk_combinatorial(spec: HocSpec, k: int) -> float:
    """Sum over compositions t_1 + ... + t_j = k of prod_m t_{t_m}"""
    if k < 0:
        raise ValueError("k must be >= 0")
    if k > COMBINATORIAL_KMAX:
        raise KTooLarge(f"composition sum limited to k <= {COMBINATORIAL_KMAX}, got {k}")
    if k == 0:
        return 1.0
    t = np.concatenate(([0.0], spec.t_array(k)))
    terms = []
    for cuts in range(k):
        for positions in itertools.combinations(range(1, k), cuts):
            edges = (0,) + positions + (k,)
            terms.append(math.prod(t[b - a] for a, b in zip(edges, edges[1:])))
    return math.fsum(terms)


def vk_mc(spec: HocSpec, k: int, n_replicas: int, seed: int) -> McEstimate:
    """Fraction of n_replicas independent chains at 0 after k steps"""
    if n_replicas <= 0:
        raise ValueError("n_replicas must be >= 1")
    if k < 0:
        raise ValueError("k must be >= 0")
    rng = np.random.default_rng(seed)
    r = spec.r_array(k + 1)
    height = np.zeros(n_replicas, dtype=np.int64)
    for _ in range(k):
        climbs = rng.random(n_replicas) < r[height]
        height = np.where(climbs, height + 1, 0)
    return wilson(int(np.count_nonzero(height == 0)), n_replicas)


# bounds on v_k

def _nonsummable_rate(r: float, k) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    return np.log(k) ** (3.0 + r) / k ** (2.0 - (1.0 + r) ** 2)


def _harmonic_r(spec: HocSpec) -> float:
    if spec.kind != 'harmonic':
        raise InvalidSpec(f"{spec!r}: the non-summable bound needs 1 - r_k = r/k")
    r = spec.params[0]
    if not 0 < r < NONSUMMABLE_R_LIMIT:
        raise InvalidR(f"r={r}: 2-(1+r)^2 > 0 needs 0 < r < sqrt(2)-1")
    return r


def calibrate_nonsummable(spec: HocSpec, k_range: Tuple[int, int] = CALIBRATION_RANGE) -> float:
    """C = max v_k / rate(k) over k_range"""
    r = _harmonic_r(spec)
    lo, hi = k_range
    v = vk_dp(spec, hi).values
    ks = np.arange(lo, hi + 1)
    constant = float(np.max(v[ks] / _nonsummable_rate(r, ks)))
    logger.debug(f"{spec!r}: calibrated C={constant:.4g} over k in [{lo}, {hi}]")
    return constant


def bound_nonsummable(spec: HocSpec, k: int, constant: Optional[float] = None) -> float:
    """C (ln k)^(3+r) / k^(2-(1+r)^2)"""
    r = _harmonic_r(spec)
    if k < 2:
        raise ValueError("the non-summable bound is stated for k >= 2")
    if constant is None:
        constant = calibrate_nonsummable(spec)
    return float(constant * _nonsummable_rate(r, k))


@dataclass
class GenericBound:
    value: float
    best_K: int
    degenerate: bool  # t_inf = 0, so (1 - t_inf)^K = 1


def bound_summable_generic(spec: HocSpec, n: int) -> GenericBound:
    """min over K = 1..n of K^2 (1 - r_{floor(n/K)}) + (1 - t_inf)^K"""
    if n < 1:
        raise ValueError("n must be >= 1")
    t_inf = spec.t_infinity()
    K = np.arange(1, n + 1)
    fall = 1.0 - spec.r_array(n + 1)[n // K]
    values = K.astype(float) ** 2 * fall + (1.0 - t_inf) ** K
    best = int(np.argmin(values))
    if t_inf == 0:
        logger.debug(f"{spec!r}: t_inf = 0, generic bound reduces to its K^2 term plus 1")
    return GenericBound(value=float(values[best]), best_K=int(K[best]), degenerate=t_inf == 0)


def _exponential_params(spec: Optional[HocSpec], c_r: Optional[float], rho: Optional[float]) -> Tuple[float, float]:
    if c_r is None or rho is None:
        if spec is None or spec.kind != 'exponential':
            raise InvalidSpec("exponential bound needs C_r and rho")
        c_r, rho = spec.params
    if c_r <= 0 or not 0 < rho < 1:
        raise InvalidSpec(f"exponential bound needs C_r > 0 and 0 < rho < 1 (C_r={c_r}, rho={rho})")
    limit = math.log(1.0 / rho)
    if c_r >= limit:
        raise CrTooLarge(c_r, limit)
    return c_r, rho


def bound_exponential(spec: Optional[HocSpec], k: int, c_r: Optional[float] = None,
                      rho: Optional[float] = None) -> float:
    """(1/C_r) (e^C_r rho)^k"""
    c_r, rho = _exponential_params(spec, c_r, rho)
    return (math.exp(c_r) * rho) ** k / c_r


def exponential_regime_holds(spec: HocSpec, c_r: float, rho: float, kmax: int = 200) -> bool:
    """t_k <= C_r rho^k for k = 1..kmax"""
    t = spec.t_array(kmax)
    envelope = c_r * rho ** np.arange(1, kmax + 1, dtype=float)
    return bool(np.all(t <= envelope * (1.0 + 1e-12)))


# facts on return times

@dataclass
class FactsReport:
    n: int
    K: int
    identity_mc: McEstimate
    identity_exact: float
    identity_ok: bool
    bracket_ok: bool
    t_infinity: float
    t_infinity_consistent: bool

    @property
    def ok(self) -> bool:
        return self.identity_ok and self.bracket_ok and self.t_infinity_consistent


def check_facts(spec: HocSpec, n: int, K: int, n_replicas: int = 10 ** 5, seed: int = 0) -> FactsReport:
    """
    Three facts on the return times I_l:
    P(I_l <= n for l <= K) = (1 - nu_{n+1})^K (checked by Monte Carlo),
    t_inf (1 - r_{n-1}) <= t_n <= 1 - r_{n-1},
    t_inf > 0 exactly when sum (1 - r_k) converges
    """
    if n < 1 or K < 1:
        raise ValueError("n and K must be >= 1")
    rng = np.random.default_rng(seed)
    times = spec.sample_return_times((n_replicas, K), rng, cap=n + 1)
    hits = int(np.count_nonzero(np.all(times <= n, axis=1)))
    estimate = wilson(hits, n_replicas)
    exact = (1.0 - spec.nu(n + 1)) ** K

    t_inf = spec.t_infinity()
    t_n = float(spec.t_array(n)[-1])
    fall = 1.0 - spec.r(n - 1)
    bracket_ok = t_inf * fall <= t_n + 1e-15 and t_n <= fall + 1e-15
    report = FactsReport(n=n, K=K, identity_mc=estimate, identity_exact=exact,
                         identity_ok=estimate.within(exact), bracket_ok=bracket_ok,
                         t_infinity=t_inf,
                         t_infinity_consistent=(t_inf > 0) == (spec.summable() and spec.r(0) > 0))
    if not report.ok:
        logger.warning(f"{spec!r}: return-time facts failed at n={n}, K={K}: {report}")
    return report


# qualitative behaviour

def divergence_proxy(survival_at_horizon: float, horizon: int) -> bool:
    """sum_k prod_{i<k} r_i declared divergent when K prod_{i<K} r_i >= 1 at the horizon K"""
    return horizon * survival_at_horizon >= 1.0


@dataclass
class QualitativeReport:
    label: str
    items: Dict[str, Dict] = field(default_factory=dict)
    ratio_curve: Optional[np.ndarray] = None


def qualitative_checks(spec: HocSpec, kmax: int = 2000) -> QualitativeReport:
    """
    Numerical verdicts on the decay of v_k:
    recurrent-type sequences send v_k to 0, summable 1 - r_k makes sum v_k
    finite, and exponential sequences give log-linear v_k. The ratio
    v_k / (1 - r_k) is kept as a diagnostic curve.
    """
    v = vk_dp(spec, kmax).values
    report = QualitativeReport(label=spec.label)
    ks = np.arange(1, kmax + 1)

    diverges = divergence_proxy(float(spec.survival(kmax)[-1]), kmax)
    if diverges:
        half = ks[kmax // 2:]
        fit = stats.linregress(np.log(half), np.log(np.maximum(v[half], PRUNE_BELOW)))
        report.items['vanishing'] = {'status': 'pass' if fit.slope < 0 else 'fail', 'slope': float(fit.slope)}
    else:
        report.items['vanishing'] = {'status': 'not_applicable', 'reason': 'sum of prod r_l converges'}

    if spec.summable():
        partial = np.cumsum(v)
        growth = float(partial[-1] - partial[kmax // 2])
        report.items['summable'] = {'status': 'pass' if growth < 1e-3 * partial[-1] else 'fail',
                                    'late_growth': growth, 'partial_sum': float(partial[-1])}
    else:
        report.items['summable'] = {'status': 'not_applicable', 'reason': 'sum of 1 - r_k diverges'}

    if spec.kind == 'exponential':
        usable = ks[v[ks] > 1e-280]
        fit = stats.linregress(usable, np.log(v[usable]))
        r_squared = fit.rvalue ** 2
        report.items['exponential'] = {'status': 'pass' if fit.slope < 0 and r_squared > 0.999 else 'fail',
                                       'slope': float(fit.slope), 'r_squared': float(r_squared)}
    else:
        report.items['exponential'] = {'status': 'not_applicable', 'reason': 'not an exponential family'}

    fall = 1.0 - spec.r_array(kmax + 1)[ks]
    with np.errstate(divide='ignore', invalid='ignore'):
        report.ratio_curve = np.where(fall > 0, v[ks] / fall, np.nan)
    return report


def hoc_table(spec: HocSpec, kmax: int, mc_replicas: int = 0, seed: int = 0,
              k_values: Optional[Sequence[int]] = None) -> List[Dict]:
    """Rows (k, v_dp, v_comb, v_mc, ci, bound_i, bound_ii, bound_iii) for the CSV report"""
    v = vk_dp(spec, kmax)
    constant = None
    if spec.kind == 'harmonic' and spec.params[0] < NONSUMMABLE_R_LIMIT:
        constant = calibrate_nonsummable(spec)
    exponential_ok = False
    if spec.kind == 'exponential':
        try:
            _exponential_params(spec, None, None)
            exponential_ok = True
        except CrTooLarge as exc:
            logger.warning(f"{spec!r}: exponential bound skipped: {exc}")

    rows = []
    for k in (range(kmax + 1) if k_values is None else k_values):
        row = {'k': k, 'v_dp': v[k], 'v_comb': None, 'v_mc': None, 'ci': '',
               'bound_i': None, 'bound_ii': None, 'bound_iii': None}
        if k <= 14:
            row['v_comb'] = vk_combinatorial(spec, k)
        if mc_replicas:
            estimate = vk_mc(spec, k, mc_replicas, seed + k)
            row['v_mc'] = estimate.value
            row['ci'] = estimate.ci_text()
        if constant is not None and k >= 2:
            row['bound_i'] = bound_nonsummable(spec, k, constant)
        if k >= 1 and spec.summable():
            row['bound_ii'] = bound_summable_generic(spec, k).value
        if exponential_ok:
            row['bound_iii'] = bound_exponential(spec, k)
        rows.append(row)
    return rows
