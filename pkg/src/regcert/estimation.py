"""Exact binomial lower confidence bounds on acceptance probabilities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .sampling import SmoothedEval
from .specfun import binomial_tail

__all__ = [
    "BinomialObservation",
    "ConfidenceSpec",
    "clopper_pearson_lower",
    "estimate_pa",
]


@dataclass(frozen=True)
class BinomialObservation:
    """Number of successes out of n independent trials."""

    successes: int
    trials: int

    def __post_init__(self):
        x, n = int(self.successes), int(self.trials)
        if n < 1:
            raise DomainError("trials must be >= 1")
        if not 0 <= x <= n:
            raise DomainError(f"successes must lie in [0, {n}], got {x}")
        object.__setattr__(self, "successes", x)
        object.__setattr__(self, "trials", n)


@dataclass(frozen=True)
class ConfidenceSpec:
    """Failure budget alpha; the one-sided bound holds at confidence 1 - alpha/2."""

    alpha: float

    def __post_init__(self):
        a = float(self.alpha)
        if not 0.0 < a < 1.0:
            raise DomainError("alpha must lie in (0, 1)")
        object.__setattr__(self, "alpha", a)


def clopper_pearson_lower(obs: BinomialObservation, conf: ConfidenceSpec) -> float:
    """Exact lower confidence bound: the p solving P(Bin(n, p) >= X) = alpha/2.

    The tail is monotone increasing in p, so bisection from the initial
    bracket [0, X/n] (expanded to [X/n, 1] if needed) always converges.
    X = 0 returns the vacuous bound 0.
    """
    x, n = obs.successes, obs.trials
    if x == 0:
        return 0.0
    target = conf.alpha / 2.0
    lo, hi = 0.0, x / n
    if binomial_tail(n, x, hi) < target:
        lo, hi = hi, 1.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if binomial_tail(n, x, mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def estimate_pa(smoothed: SmoothedEval, conf: ConfidenceSpec) -> np.ndarray:
    """Per-output Clopper-Pearson lower bounds on the acceptance probability."""
    return np.array([
        clopper_pearson_lower(BinomialObservation(int(c), smoothed.n), conf)
        for c in smoothed.accept_counts
    ])
