"""
Monte Carlo proportion estimates with Wilson intervals
"""

import math
from dataclasses import dataclass

from scipy import stats


@dataclass
class McEstimate:
    value: float
    ci_low: float
    ci_high: float
    n: int

    @property
    def sigma(self) -> float:
        return math.sqrt(max(self.value * (1.0 - self.value), 0.0) / self.n)

    def within(self, target: float, n_sigma: float = 3.0) -> bool:
        # binomial sigma at the target keeps zero-count estimates testable
        spread = math.sqrt(max(target * (1.0 - target), 0.0) / self.n)
        return abs(self.value - target) <= n_sigma * max(self.sigma, spread) + 1e-12

    def ci_text(self) -> str:
        return f"[{self.ci_low!r};{self.ci_high!r}]"


def wilson(successes: int, n: int, confidence: float = 0.95) -> McEstimate:
    if n <= 0:
        raise ValueError("a proportion needs n >= 1 trials")
    interval = stats.binomtest(int(successes), int(n)).proportion_ci(confidence_level=confidence, method='wilson')
    return McEstimate(value=successes / n, ci_low=float(interval.low), ci_high=float(interval.high), n=n)
