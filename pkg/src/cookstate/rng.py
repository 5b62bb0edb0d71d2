"""Deterministic, stream-indexed random number generation.

All randomness in the package flows from one 64-bit seed. Independent
consumers (splitting, initialization, dropout, augmentation, batch
shuffling) draw from separate Philox streams keyed by ``(seed, stream id)``,
so the same seed reproduces identical sequences across runs and platforms
regardless of how many draws other consumers make.

Per-epoch streams derive a fresh key from ``(domain, epoch)`` so epoch N's
shuffle never depends on how much randomness epoch N-1 consumed.
"""

from __future__ import annotations

import numpy as np

# Fixed domain constants; changing them invalidates recorded runs.
SPLIT = 1
INIT = 2
DROPOUT = 3
AUGMENT = 4
BATCH = 5


class Rng:
    """Splittable generator: one seed, many independent Philox streams."""

    def __init__(self, seed: int):
        if not 0 <= int(seed) < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")
        self.seed = int(seed)

    def stream(self, domain: int, index: int = 0) -> np.random.Generator:
        """Generator for ``(domain, index)``; identical inputs, identical stream."""
        key = np.array(
            [self.seed, (int(domain) << 32) | (int(index) & 0xFFFFFFFF)],
            dtype=np.uint64,
        )
        return np.random.Generator(np.random.Philox(key=key))

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed})"


def truncated_normal(gen: np.random.Generator, shape, std: float, bound: float = 2.0):
    """Normal(0, std) samples with |x| <= bound*std, redrawn on rejection."""
    out = gen.normal(0.0, std, size=shape)
    limit = bound * std
    bad = np.abs(out) > limit
    while np.any(bad):
        out[bad] = gen.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > limit
    return out
