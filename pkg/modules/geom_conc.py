"""
Concentration of sums of geometric variables

xi_1..xi_n i.i.d. with P(xi = j) = alpha (1-alpha)^(j-1), j >= 1, and
S = xi_1 + ... + xi_n. S - n is negative binomial (failures before the n-th
success), which gives the exact tails used to check the Chernoff bounds.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import stats

from .errors import KTooSmall
from .estimates import McEstimate, wilson

logger = logging.getLogger(__name__)

UK_MODES = ('exact', 'chernoff', 'corollary')
_FLOOR_EPS = 1e-9


@dataclass(frozen=True)
class GeomParams:
    alpha: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")

    @property
    def c1(self) -> float:
        q = (1.0 - self.alpha) / self.alpha
        return q + 4.0 * q * q

    @property
    def c2(self) -> float:
        a = self.alpha
        return math.log(min((2.0 - a) / (2.0 * (1.0 - a)), 2.0))

    @property
    def c3(self) -> float:
        a = self.alpha
        return min(a / (4.0 * (1.0 - a) * (4.0 - 3.0 * a)), self.c2 / 4.0)


def _check(alpha: float, n: int):
    GeomParams(alpha)
    if n < 1:
        raise ValueError("n must be >= 1")


def chernoff_upper(alpha: float, n: int, x: float) -> float:
    """Bound on P(S/n - 1/alpha > x)"""
    _check(alpha, n)
    if x <= 0:
        raise ValueError("x must be > 0")
    params = GeomParams(alpha)
    return math.exp(-n * min(x * x / (2.0 * params.c1), params.c2 * x / 2.0))


def chernoff_lower(alpha: float, n: int, x: float) -> float:
    """Bound on P(S/n - 1/alpha < -x)"""
    _check(alpha, n)
    if x <= 0:
        raise ValueError("x must be > 0")
    params = GeomParams(alpha)
    return math.exp(-n * min(x * x / (2.0 * params.c1), x / 2.0))


def log_exact_tail(alpha: float, n: int, threshold: float) -> float:
    """log P(S > threshold)"""
    _check(alpha, n)
    failures = math.floor(threshold + _FLOOR_EPS) - n
    if failures < 0:
        return 0.0
    return float(stats.nbinom.logsf(failures, n, alpha))


def exact_tail(alpha: float, n: int, threshold: float) -> float:
    """P(S > threshold)"""
    return math.exp(log_exact_tail(alpha, n, threshold))


def log_exact_lower_tail(alpha: float, n: int, threshold: float) -> float:
    """log P(S < threshold)"""
    _check(alpha, n)
    failures = math.ceil(threshold - _FLOOR_EPS) - 1 - n
    if failures < 0:
        return -math.inf
    return float(stats.nbinom.logcdf(failures, n, alpha))


def exact_lower_tail(alpha: float, n: int, threshold: float) -> float:
    """P(S < threshold)"""
    return math.exp(log_exact_lower_tail(alpha, n, threshold))


def tail_mc(alpha: float, n: int, threshold: float, n_samples: int, seed: int,
            lower: bool = False) -> McEstimate:
    """Monte Carlo P(S > threshold), or P(S < threshold) when lower"""
    _check(alpha, n)
    rng = np.random.default_rng(seed)
    sums = rng.geometric(alpha, size=(n_samples, n)).sum(axis=1)
    hits = np.count_nonzero(sums < threshold if lower else sums > threshold)
    return wilson(int(hits), n_samples)


def uk_size(alpha: float, k: int) -> int:
    """n = floor(k alpha / 2) variables"""
    return int(math.floor(k * alpha / 2.0 + _FLOOR_EPS))


def log_uk(alpha: float, k: int, mode: str = 'exact') -> float:
    """
    log u_k with u_k = n P(|S - n/alpha| > k/2), n = floor(k alpha / 2)

    'exact' uses the negative-binomial tails, 'chernoff' the two Chernoff
    bounds with x = k/(2n), 'corollary' the asymptotic envelope
    alpha e^(-k C_3), which only holds for k beyond an unspecified k(eps).
    """
    if mode not in UK_MODES:
        raise ValueError(f"unknown u_k mode '{mode}' (expected one of {UK_MODES})")
    params = GeomParams(alpha)
    n = uk_size(alpha, k)
    if n < 1:
        raise KTooSmall(f"u_k needs k >= ceil(2/alpha) = {math.ceil(2.0 / alpha)}, got k={k}")
    if mode == 'corollary':
        return math.log(alpha) - k * params.c3
    if mode == 'chernoff':
        x = k / (2.0 * n)
        return math.log(n) + math.log(chernoff_upper(alpha, n, x) + chernoff_lower(alpha, n, x))
    centre = n / alpha
    upper = log_exact_tail(alpha, n, centre + k / 2.0)
    lower = log_exact_lower_tail(alpha, n, centre - k / 2.0)
    return math.log(n) + float(np.logaddexp(upper, lower))


def uk(alpha: float, k: int, mode: str = 'exact') -> float:
    return math.exp(log_uk(alpha, k, mode))


def decay_slope(alpha: float, k_values: Sequence[int], mode: str = 'exact') -> float:
    """-slope of log u_k against k (an estimate of the exponential rate)"""
    ks = np.asarray(k_values, dtype=float)
    logs = np.array([log_uk(alpha, int(k), mode) for k in k_values])
    return float(-stats.linregress(ks, logs).slope)


def default_x_grid(alpha: float, size: int = 20) -> np.ndarray:
    return np.linspace(0.05, 2.0 / alpha, size)


def conc_table(alphas: Sequence[float], ns: Sequence[int], x_values: Optional[Sequence[float]] = None,
               size: int = 20) -> List[Dict]:
    """
    Rows (alpha, n, x, exact, chernoff, ratio) for both tails

    Upper-tail rows carry x > 0; lower-tail rows carry -x.
    """
    rows = []
    for alpha in alphas:
        grid = default_x_grid(alpha, size) if x_values is None else np.asarray(x_values, dtype=float)
        for n in ns:
            for x in grid:
                x = float(x)
                for sign, exact, bound in (
                        (1.0, exact_tail(alpha, n, n * (1.0 / alpha + x)), chernoff_upper(alpha, n, x)),
                        (-1.0, exact_lower_tail(alpha, n, n * (1.0 / alpha - x)), chernoff_lower(alpha, n, x))):
                    rows.append({'alpha': alpha, 'n': n, 'x': sign * x, 'exact': exact, 'chernoff': bound,
                                 'ratio': exact / bound if bound > 0 else None})
    violations = sum(1 for r in rows if r['exact'] > r['chernoff'] * (1.0 + 1e-12))
    if violations:
        logger.warning(f"{violations} Chernoff bound violations in {len(rows)} rows")
    return rows
