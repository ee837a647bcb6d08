"""
Bounds Module
Empirical d-bar estimates from coupled runs and every upper bound on
d-bar(X, X^[k]) the coupling construction yields, assembled into one report
"""

import logging
import math
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .cftp import (DEFAULT_PROBE_DEPTH, DEFAULT_WINDOW_CAP, UniformStream, alpha_thresholds,
                   coupled_sample, ell_at_zero, select_detector, theta_ell, theta_prime)
from .errors import (DivergenceCheckFailed, KTooSmall, NonSummable,
                     WindowCapExceeded)
from .estimates import McEstimate, wilson
from .geom_conc import uk, uk_size
from .house_of_cards import HocSpec, bound_nonsummable, divergence_proxy, vk_dp
from .kernel import AlphaSequence, Kernel, RenewalKernel, alpha_seq
from .markov_approx import canonical_table
from .partition import (CanonicalPartition, RangePartition, RenewalPartition, TruncatedPartition,
                        canonical_partition, default_partition)
from .utility.utils import format_float, replica_key
from .utility.workers import run_replicas

logger = logging.getLogger(__name__)

OK = 'OK'
VIOLATED = 'VIOLATED'
NOT_APPLICABLE = 'NA'
EXACT = 'exact'

BOUND_NAMES = ('summable', 'ell', 'theta', 'achier', 'local')
REPORT_COLUMNS = ['kernel', 'k', 'dbar_hat', 'dbar_ci'] + [f"b_{name}" for name in BOUND_NAMES] + ['verdicts']

# replica index offsets keep the theta and ell samples on streams disjoint from the coupled runs
THETA_STREAM = 1 << 40
ELL_STREAM = 2 << 40
SUMMABLE_TAIL_TOL = 1e-6
Z_95 = 1.959963984540054


@dataclass
class DbarEstimate:
    """Pooled disagreement fraction over replicas of coupled runs"""
    k: int
    value: float
    sigma: float
    ci: McEstimate
    n_disagree: int
    n_sites: int
    replicas: int


@dataclass
class BoundValue:
    value: Optional[float]
    upper: Optional[float] = None
    applicable: bool = True
    note: str = ''

    @classmethod
    def not_applicable(cls, note: str) -> 'BoundValue':
        return cls(value=None, applicable=False, note=note)


# replica workers: top-level so they pickle into the pool

@dataclass
class _CouplingSetup:
    kernel: Kernel
    k: int
    horizon: int
    partition: RangePartition
    truncated: TruncatedPartition
    window_cap: int
    probe_depth: int


def _coupled_replica(setup: _CouplingSetup, key: int) -> int:
    trace = coupled_sample(setup.kernel, setup.k, key, setup.horizon, partition=setup.partition,
                           truncated=setup.truncated, window_cap=setup.window_cap,
                           probe_depth=setup.probe_depth)
    return trace.n_disagree


def _theta_replica(partition: RangePartition, detector: Callable, window_cap: int, key: int) -> int:
    return -detector(partition, UniformStream(key), window_cap=window_cap).theta0


def _ell_replica(partition: CanonicalPartition, window_cap: int, limit: int, key: int) -> Tuple[int, float]:
    uniforms = UniformStream(key)
    theta = theta_ell(partition, uniforms, window_cap=window_cap).theta0
    return -theta, ell_at_zero(partition, uniforms, limit)


def _keys(seed: int, n: int, offset: int = 0) -> List[int]:
    return [replica_key(seed, offset + r) for r in range(n)]


def estimate_dbar(kernel: Kernel, k: int, horizon: int, n_replicas: int, seed: int,
                  partition: Optional[RangePartition] = None, workers: int = 1,
                  window_cap: int = DEFAULT_WINDOW_CAP, probe_depth: int = DEFAULT_PROBE_DEPTH,
                  state_cap: int = 4096) -> DbarEstimate:
    """
    Disagreement fraction of X and X^[k] over n_replicas coupled windows of `horizon` sites

    Any coupling gives an upper bound on d-bar. The Wilson interval treats
    sites as independent; `sigma` is the replica-level standard error.
    """
    if n_replicas < 1 or horizon < 1:
        raise ValueError("n_replicas and horizon must be >= 1")
    if partition is None:
        partition = default_partition(kernel)
    truncated = TruncatedPartition(partition, k, canonical_table(kernel, k, state_cap))
    setup = _CouplingSetup(kernel, k, horizon, partition, truncated, window_cap, probe_depth)
    counts = np.array(run_replicas(partial(_coupled_replica, setup), _keys(seed, n_replicas), workers),
                      dtype=np.int64)
    n_sites = n_replicas * horizon
    total = int(counts.sum())
    value = total / n_sites
    if n_replicas > 1:
        sigma = float(np.std(counts / horizon, ddof=1) / math.sqrt(n_replicas))
    else:
        sigma = math.sqrt(value * (1.0 - value) / n_sites)
    estimate = DbarEstimate(k=k, value=value, sigma=sigma, ci=wilson(total, n_sites),
                            n_disagree=total, n_sites=n_sites, replicas=n_replicas)
    logger.info(f"dbar({kernel.kernel_id}, k={k}) <= {value:.6g} +- {sigma:.2g} "
                f"({total} disagreements over {n_sites} sites)")
    return estimate


def sample_theta(partition: RangePartition, n_replicas: int, seed: int, detector: Optional[Callable] = None,
                 workers: int = 1, window_cap: int = DEFAULT_WINDOW_CAP) -> np.ndarray:
    """|theta[0]| over independent streams"""
    if n_replicas < 1:
        raise ValueError("n_replicas must be >= 1")
    if detector is None:
        detector = select_detector(partition)
    fn = partial(_theta_replica, partition, detector, window_cap)
    return np.array(run_replicas(fn, _keys(seed, n_replicas, THETA_STREAM), workers), dtype=np.int64)


def _window_mean(thetas: np.ndarray) -> Tuple[float, float]:
    """E(|theta| + 1) over the sample and its standard error"""
    sites = thetas + 1.0
    se = float(np.std(sites, ddof=1) / math.sqrt(len(sites))) if len(sites) > 1 else 0.0
    return float(sites.mean()), se


def summability_holds(alphas: AlphaSequence) -> bool:
    """sum (1 - alpha_k) < infinity, judged on the materialized sequence"""
    if alphas.reaches_one():
        return True
    if alphas.plateau:
        return False
    values = alphas.values
    return float(np.sum(1.0 - values[len(values) // 2 + 1:])) < SUMMABLE_TAIL_TOL


def _alphas_for(kernel: Kernel, kmax: int) -> AlphaSequence:
    depth = max(kmax, len(alpha_thresholds(kernel)) - 1)
    return alpha_seq(kernel, depth)


def bound_summable(kernel: Kernel, k: int, n_theta_replicas: int, seed: int,
                   thetas: Optional[np.ndarray] = None, workers: int = 1,
                   window_cap: int = DEFAULT_WINDOW_CAP) -> BoundValue:
    """E(|theta[0]| + 1) (1 - alpha_k) with theta[0] from the canonical partition"""
    alphas = _alphas_for(kernel, k)
    if not summability_holds(alphas):
        raise NonSummable(f"{kernel.kernel_id}: sum of 1 - alpha_k does not converge")
    if thetas is None:
        thetas = sample_theta(canonical_partition(kernel), n_theta_replicas, seed,
                              workers=workers, window_cap=window_cap)
    mean, se = _window_mean(thetas)
    gap = 1.0 - alphas.value(k)
    return BoundValue(value=mean * gap, upper=(mean + Z_95 * se) * gap)


@dataclass
class EllSample:
    thetas: np.ndarray
    ells: np.ndarray
    limit: int


def sample_ell(kernel: RenewalKernel, n_replicas: int, seed: int, limit: int, workers: int = 1,
               window_cap: int = DEFAULT_WINDOW_CAP) -> EllSample:
    """(|theta_ell[0]|, ell at time 0) per replica; ell values above `limit` are inf"""
    partition = canonical_partition(kernel)
    fn = partial(_ell_replica, partition, window_cap, limit)
    pairs = run_replicas(fn, _keys(seed, n_replicas, ELL_STREAM), workers)
    return EllSample(thetas=np.array([p[0] for p in pairs], dtype=np.int64),
                     ells=np.array([p[1] for p in pairs], dtype=float), limit=limit)


def bound_ell(kernel: RenewalKernel, k: int, n_replicas: int, seed: int,
              sample: Optional[EllSample] = None, workers: int = 1,
              window_cap: int = DEFAULT_WINDOW_CAP) -> BoundValue:
    """E(|theta[0]| + 1) P(ell > k) for a renewal kernel"""
    if not isinstance(kernel, RenewalKernel):
        return BoundValue.not_applicable('ell bound is stated for renewal kernels')
    if sample is None or sample.limit < k:
        sample = sample_ell(kernel, n_replicas, seed, k, workers, window_cap)
    mean, se = _window_mean(sample.thetas)
    tail = wilson(int(np.count_nonzero(sample.ells > k)), len(sample.ells))
    return BoundValue(value=mean * tail.value, upper=(mean + Z_95 * se) * tail.ci_high)


def bound_theta_tail(k: int, thetas: np.ndarray, window_cap: int = DEFAULT_WINDOW_CAP) -> BoundValue:
    """P(theta[0] < -k) from a sample of |theta[0]|"""
    if k >= window_cap:
        return BoundValue.not_applicable(f"k={k} beyond the window cap {window_cap}")
    tail = wilson(int(np.count_nonzero(thetas > k)), len(thetas))
    return BoundValue(value=tail.value, upper=tail.ci_high)


def bound_achier(alphas: AlphaSequence, k: int) -> BoundValue:
    """v_k of the house-of-cards chain with r_l = alpha_l"""
    if alphas.plateau and not alphas.reaches_one():
        return BoundValue.not_applicable(f"alpha plateau {alphas.values[-1]:.6g} < 1: v_k does not vanish")
    if not alphas.plateau and alphas.kmax < k:
        raise ValueError(f"alpha sequence holds {alphas.kmax + 1} values, k={k} needs more")
    spec = HocSpec.from_sequence(np.clip(alphas.values, 0.0, 1.0))
    value = vk_dp(spec, k)[k]
    return BoundValue(value=value, upper=value)


def weak_continuity_envelope(r: float, k: int) -> float:
    """Calibrated C (ln k)^(3+r) / k^(2-(1+r)^2) for 1 - alpha_k = r/k"""
    return bound_nonsummable(HocSpec.harmonic(r), k)


def renewal_ell(i: int) -> int:
    """
    Past length that fixes the law once a 2 sits at lag i

    Conservative: under the renewal partition a mark already fixes it. Any ell
    at or above the true one is valid; a larger ell only lowers r_k and loosens
    the bound.
    """
    return i + 1


@dataclass
class LocalContinuitySpec:
    """
    Continuity with respect to the all-ones past

    strong:  r_k = max(r_{k-1}, 1 - (1 - alpha(2))^(ell^-1(k)))
    uniform: r_k = max(r_{k-1}, 1 - (1 - alpha1_k) / alpha(2))
    with r_0 = alpha_0 and ell^-1(k) = max{i : ell(i) <= k} (0 when empty).
    """
    variant: str
    alpha2: float
    alpha0: float
    ell: Callable[[int], int] = renewal_ell
    alpha_ones: Optional[Sequence[float]] = None

    def __post_init__(self):
        if self.variant not in ('strong', 'uniform'):
            raise ValueError(f"unknown variant '{self.variant}'")
        if not 0 < self.alpha2 <= 1:
            raise ValueError("alpha(2) must lie in (0, 1]")
        if self.variant == 'uniform' and not self.alpha_ones:
            raise ValueError("uniform variant needs the alpha1_k sequence")

    @classmethod
    def for_renewal(cls, kernel: RenewalKernel) -> 'LocalContinuitySpec':
        return cls(variant='strong', alpha2=kernel.alpha2, alpha0=kernel.alpha(0))

    def _ell_inverse(self, n: int) -> np.ndarray:
        ells = np.array([self.ell(i) for i in range(n + 1)])
        inverse = np.searchsorted(ells, np.arange(n), side='right') - 1
        return np.maximum(inverse, 0)

    def r_sequence(self, n: int) -> np.ndarray:
        """r_0..r_{n-1}"""
        k = np.arange(n)
        if self.variant == 'strong':
            raw = 1.0 - (1.0 - self.alpha2) ** self._ell_inverse(n)
        else:
            ones = np.asarray(self.alpha_ones, dtype=float)
            values = ones[np.minimum(k, len(ones) - 1)]
            raw = 1.0 - (1.0 - values) / self.alpha2
        raw = np.clip(raw, 0.0, 1.0)
        raw[0] = self.alpha0
        return np.maximum.accumulate(raw)


def bound_local_continuity(spec: LocalContinuitySpec, k: int, horizon: int = 10 ** 4) -> BoundValue:
    """u_k + v_{floor(k alpha(2) / 2)} for the house of cards with r = spec.r_sequence"""
    horizon = max(horizon, 2 * k)
    r = spec.r_sequence(horizon)
    survival = float(np.prod(r[:horizon]))
    if not divergence_proxy(survival, horizon):
        raise DivergenceCheckFailed(
            f"sum of prod r_i not shown divergent: K prod r_i = {horizon * survival:.3g} < 1 at K={horizon}")
    n = uk_size(spec.alpha2, k)
    if n < 1:
        raise KTooSmall(f"k={k} too small for alpha(2)={spec.alpha2}")
    v = vk_dp(HocSpec.from_sequence(r[:n + 1]), n)[n]
    value = uk(spec.alpha2, k) + v
    return BoundValue(value=value, upper=value)


@dataclass
class WaldCheck:
    product: float
    indicator: float
    se: float

    def agrees(self, n_sigma: float = 3.0) -> bool:
        return abs(self.product - self.indicator) <= n_sigma * self.se + 1e-12


def wald_identity(kernel: RenewalKernel, k: int, n_replicas: int, seed: int,
                  window_cap: int = DEFAULT_WINDOW_CAP) -> WaldCheck:
    """
    E(|theta|+1)(1 - alpha_k) against E sum_{i=theta..0} 1{U_i >= alpha_k}
    for the renewal-mark detector; equal by Wald's identity
    """
    partition = RenewalPartition(kernel)
    level = kernel.alpha(k)
    sizes, counts = [], []
    for key in _keys(seed, n_replicas, THETA_STREAM):
        uniforms = UniformStream(key)
        theta = theta_prime(partition, uniforms, window_cap=window_cap).theta0
        sizes.append(1 - theta)
        counts.append(int(np.count_nonzero(uniforms.window(theta, 0) >= level)))
    sizes = np.array(sizes, dtype=float)
    counts = np.array(counts, dtype=float)
    product = sizes.mean() * (1.0 - level)
    diff = counts - sizes * (1.0 - level)
    se = float(np.std(diff, ddof=1) / math.sqrt(n_replicas)) if n_replicas > 1 else 0.0
    return WaldCheck(product=float(product), indicator=float(counts.mean()), se=se)


# report

@dataclass
class DbarReport:
    kernel_id: str
    rows: List[Dict] = field(default_factory=list)
    theta_mean: Optional[float] = None
    theta_se: Optional[float] = None

    @property
    def violated(self) -> bool:
        return any(VIOLATED in row['verdicts'] for row in self.rows)

    def to_rows(self) -> List[Dict]:
        return [{column: row[column] for column in REPORT_COLUMNS} for row in self.rows]


def verdict(estimate: DbarEstimate, bound: BoundValue) -> str:
    if not bound.applicable or bound.upper is None:
        return NOT_APPLICABLE
    if estimate.value - 3.0 * estimate.sigma > bound.upper:
        return VIOLATED
    return OK


def _cell(bound: BoundValue) -> str:
    return format_float(bound.value) if bound.applicable else NOT_APPLICABLE


def _guarded(name: str, compute: Callable[[], BoundValue]) -> BoundValue:
    try:
        return compute()
    except (NonSummable, DivergenceCheckFailed, KTooSmall, WindowCapExceeded) as exc:
        logger.info(f"bound {name} not applicable: {exc}")
        return BoundValue.not_applicable(str(exc))


def report(kernel: Kernel, k_grid: Sequence[int], horizon: int = 1, n_replicas: int = 10 ** 4,
           n_theta_replicas: int = 10 ** 4, seed: int = 0, workers: int = 1,
           window_cap: int = DEFAULT_WINDOW_CAP, probe_depth: int = DEFAULT_PROBE_DEPTH,
           state_cap: int = 4096, label: Optional[str] = None) -> DbarReport:
    """Empirical d-bar next to every applicable bound, one row per k"""
    label = label or kernel.kernel_id
    out = DbarReport(kernel_id=label)
    k_grid = sorted(set(int(k) for k in k_grid))
    kmax = max(k_grid)
    partition = default_partition(kernel)
    alphas = _alphas_for(kernel, kmax)
    is_renewal = isinstance(kernel, RenewalKernel)

    # theta samples are shared by every k
    theta_default = None
    try:
        theta_default = sample_theta(partition, n_theta_replicas, seed, workers=workers, window_cap=window_cap)
        out.theta_mean, out.theta_se = _window_mean(theta_default)
        out.theta_mean -= 1.0
    except WindowCapExceeded as exc:
        logger.warning(f"theta sample for {label} hit the window cap: {exc}")

    theta_canonical = theta_default if isinstance(partition, CanonicalPartition) else None
    if theta_canonical is None and summability_holds(alphas):
        theta_canonical = _guarded_sample(lambda: sample_theta(
            canonical_partition(kernel), n_theta_replicas, seed, workers=workers, window_cap=window_cap))

    ell_sample = None
    if is_renewal:
        ell_sample = _guarded_sample(lambda: sample_ell(kernel, n_theta_replicas, seed, kmax, workers, window_cap))

    for k in k_grid:
        estimate = estimate_dbar(kernel, k, horizon, n_replicas, seed, partition=partition, workers=workers,
                                 window_cap=window_cap, probe_depth=probe_depth, state_cap=state_cap)
        if kernel.order is not None and k >= kernel.order:
            zero = BoundValue(value=0.0, upper=0.0)
            bounds = {name: zero for name in BOUND_NAMES}
            verdicts = {name: (EXACT if estimate.n_disagree == 0 else VIOLATED) for name in BOUND_NAMES}
        else:
            bounds = {'summable': BoundValue.not_applicable('no canonical theta sample'),
                      'ell': BoundValue.not_applicable('not a renewal kernel'),
                      'theta': BoundValue.not_applicable('no theta sample'),
                      'achier': bound_achier(alphas, k),
                      'local': BoundValue.not_applicable('not a renewal kernel')}
            if theta_canonical is not None:
                bounds['summable'] = _guarded('summable', lambda: bound_summable(
                    kernel, k, n_theta_replicas, seed, thetas=theta_canonical))
            if theta_default is not None:
                bounds['theta'] = bound_theta_tail(k, theta_default, window_cap)
            if is_renewal:
                if ell_sample is not None:
                    bounds['ell'] = bound_ell(kernel, k, n_theta_replicas, seed, sample=ell_sample)
                bounds['local'] = _guarded('local', lambda: bound_local_continuity(
                    LocalContinuitySpec.for_renewal(kernel), k))
            verdicts = {name: verdict(estimate, bound) for name, bound in bounds.items()}
        row = {'kernel': label, 'k': k, 'dbar_hat': format_float(estimate.value),
               'dbar_ci': estimate.ci.ci_text(), 'estimate': estimate, 'bounds': bounds}
        for name in BOUND_NAMES:
            row[f"b_{name}"] = _cell(bounds[name])
        row['verdicts'] = ';'.join(f"{name}={verdicts[name]}" for name in BOUND_NAMES)
        out.rows.append(row)
        if VIOLATED in verdicts.values():
            logger.error(f"{label} k={k}: bound violated ({row['verdicts']})")
    return out


def _guarded_sample(compute: Callable):
    try:
        return compute()
    except WindowCapExceeded as exc:
        logger.warning(f"sample skipped: {exc}")
        return None
