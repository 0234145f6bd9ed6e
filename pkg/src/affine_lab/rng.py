"""Counter-based RNG streams.

Every stochastic routine in the package derives its randomness from a Philox
stream keyed by (seed, stream index), so results are a deterministic function
of the seed and are independent of worker count and batching.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def philox_gen(seed: int, stream: int) -> np.random.Generator:
    """Independent generator for (seed, stream); both are reduced mod 2^64."""
    key = np.array([seed & _MASK64, stream & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
