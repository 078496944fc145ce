"""Counter-mode random streams.

Every Monte Carlo sample gets its own Philox stream keyed by (master seed,
purpose) with the sample index placed in the counter block. Reductions over
samples are therefore independent of worker count and chunking.
"""

from __future__ import annotations

import numpy as np

# Purpose tags keep streams for different experiment stages disjoint.
PURPOSE_DISTRIBUTIONAL = 1
PURPOSE_ALMOST_SURE = 2
PURPOSE_A2 = 3
PURPOSE_E2 = 4
PURPOSE_SAMPLING = 5
PURPOSE_PROBE = 6


def philox_key(master_seed: int, purpose: int) -> np.ndarray:
    """Derive the 128-bit Philox key for one experiment stage."""
    ss = np.random.SeedSequence([int(master_seed) & (2**64 - 1), int(purpose)])
    return ss.generate_state(2, np.uint64)


def sample_generator(key: np.ndarray, sample_index: int) -> np.random.Generator:
    """Generator for one sample; disjoint from every other index by counter."""
    counter = np.zeros(4, dtype=np.uint64)
    counter[2] = np.uint64(sample_index)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def uniform_fixed(gen: np.random.Generator, bits: int) -> int:
    """A uniform integer in [0, 2**bits), i.e. a bits-bit fixed-point U[0,1)."""
    nwords = (bits + 63) // 64
    words = gen.integers(0, 2**64, size=nwords, dtype=np.uint64)
    value = 0
    for w in words.tolist():
        value = (value << 64) | int(w)
    return value >> (64 * nwords - bits)


def bit_matrix(key: np.ndarray, first: int, count: int, words_per_row: int) -> np.ndarray:
    """Packed random bit rows for samples [first, first+count).

    Row i holds the binary expansion of sample first+i as uint64 words,
    most significant fractional bit first within each word.
    """
    out = np.empty((count, words_per_row), dtype=np.uint64)
    for i in range(count):
        gen = sample_generator(key, first + i)
        out[i] = gen.integers(0, 2**64, size=words_per_row, dtype=np.uint64)
    return out
