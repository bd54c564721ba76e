"""Simulated encoder channel for the encoder-fidelity assumption."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..measures import DiscreteMeasure
from ..rng import make_rng
from ..variation import epsilon_close, tv_between_discrete


@dataclass(frozen=True)
class FidelityResult:
    frequency: float
    bound: float
    corruption: float
    trials: int

    @property
    def consistent(self) -> bool:
        """Observed frequency meets the assumed lower bound up to Monte Carlo error."""
        slack = 3.0 * np.sqrt(0.25 / self.trials)
        return self.frequency >= self.bound - slack


def corruption_probability(n: int, k: float, r: float) -> float:
    return float(min(1.0, k * n ** (-r)))


def simulate_encoder_fidelity(n: int, epsilon: float, k: float, r: float, trials: int, seed: int) -> FidelityResult:
    """Frequency with which the encoded empirical is ``epsilon``-close in TV to the ideal one.

    The idealised channel encodes each of ``n`` latent atoms exactly, except
    that each one is independently replaced by a fresh draw with probability
    ``min(1, k n^-r)``.  The TV between the two atomic measures is computed
    exactly.  ``bound`` is ``max(0, 1 - k exp(-n^r epsilon^2))``.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    q = corruption_probability(n, k, r)
    hits = 0
    for t in range(trials):
        rng = make_rng(seed, n, t)
        ideal = rng.random((n, 1))
        hit = rng.random(n) < q
        noisy = ideal.copy()
        noisy[hit, 0] = 1.0 + rng.random(int(hit.sum()))
        tv = tv_between_discrete(DiscreteMeasure.uniform(ideal), DiscreteMeasure.uniform(noisy))
        hits += epsilon_close(tv, epsilon)
    bound = max(0.0, 1.0 - k * np.exp(-(n ** r) * epsilon ** 2))
    return FidelityResult(hits / trials, float(bound), q, trials)
