"""
Exceptions raised by the simulation and bound modules
"""


class InfinichainError(Exception):
    """Base class for all domain errors"""


# kernel
class InvalidKernel(InfinichainError):
    """Kernel parameters violate the family's constraints"""


class UndeterminedProbability(InfinichainError):
    """An exact probability was requested but the finite past does not pin it down"""


class ContextSpaceTooLarge(InfinichainError):
    def __init__(self, size: int, cap: int):
        super().__init__(f"context space of size {size} exceeds cap {cap}")
        self.size = size
        self.cap = cap


# partition
class PastTooShort(InfinichainError):
    """locate needs a longer past; `needed` is the required past length"""

    def __init__(self, needed: int):
        super().__init__(f"past too short: need at least {needed} symbols")
        self.needed = needed


class NoResidualMass(InfinichainError):
    """u fell past the last range level of a finite-order kernel"""


class NegativeLeftover(InfinichainError):
    def __init__(self, context, symbol: int, value: float):
        super().__init__(f"negative leftover {value:.3e} for symbol {symbol} after context {context}")
        self.context = context
        self.symbol = symbol
        self.value = value


# cftp
class WindowCapExceeded(InfinichainError):
    def __init__(self, cap: int):
        super().__init__(f"no coalescence found within {cap} steps")
        self.cap = cap


class CoalescenceViolation(InfinichainError):
    """Probe pasts disagreed after a detected coalescence time"""


# markov_approx
class OrderTooHigh(InfinichainError):
    pass


# house_of_cards
class InvalidSpec(InfinichainError):
    pass


class KTooLarge(InfinichainError):
    pass


class InvalidR(InfinichainError):
    pass


class CrTooLarge(InfinichainError):
    def __init__(self, c_r: float, limit: float):
        super().__init__(f"C_r={c_r} must be below ln(1/rho)={limit}")
        self.c_r = c_r
        self.limit = limit


# geom_conc
class KTooSmall(InfinichainError):
    pass


# bounds
class DivergenceCheckFailed(InfinichainError):
    pass


class NonSummable(InfinichainError):
    pass
