"""Counter-based random streams.

Every stochastic operation takes an integer seed; independent streams for a
Monte Carlo cell are derived from ``(seed, *keys)`` through numpy's
``SeedSequence`` and fed to the Philox counter-based bit generator.
"""

from __future__ import annotations

import numpy as np

GENERATOR_NAME = "numpy.random.Philox (SeedSequence-derived keys)"

_MASK64 = (1 << 64) - 1


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed) & _MASK64, *(int(k) & _MASK64 for k in keys)])
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 64-bit child seed for the stream ``(seed, *keys)``."""
    ss = np.random.SeedSequence([int(seed) & _MASK64, *(int(k) & _MASK64 for k in keys)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return make_rng(int(seed))
