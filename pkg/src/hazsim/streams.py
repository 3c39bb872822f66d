"""Reproducible random-number streams.

One counter-based Philox generator per observation: stream i is
Philox(key=seed) advanced by i * 2**64 draws, which gives every row its
own non-overlapping block of the counter space.  A row's draws therefore
depend only on (seed, row index), never on execution order or thread
count.

Uniforms are drawn on the open interval (0, 1) as (k + 0.5) / 2**53 with
k a 53-bit integer, so -log(u) is always finite.
"""

from __future__ import annotations

import numpy as np

_BLOCK = 2**64
_DENOM = float(2**53)


def substream(seed: int, index: int) -> np.random.Generator:
    """Generator for observation ``index`` under ``seed``."""
    bits = np.random.Philox(key=int(seed))
    bits = bits.advance(int(index) * _BLOCK)
    return np.random.Generator(bits)


def uniform_open(gen: np.random.Generator, size=None):
    """Uniform draws strictly inside (0, 1)."""
    k = gen.integers(0, 2**53, size=size, dtype=np.uint64)
    if size is None:
        return (float(k) + 0.5) / _DENOM
    return (k.astype(np.float64) + 0.5) / _DENOM
