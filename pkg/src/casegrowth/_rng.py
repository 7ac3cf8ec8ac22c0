"""Deterministic splitmix64 generator used for all seeded randomness.

A tiny integer-only PRNG keeps the numba and numpy kernel paths bit-identical
(numpy's Generator cannot be advanced inside an njit kernel) and makes seed
derivation for parallel tree training reproducible regardless of evaluation
order.
"""

from __future__ import annotations

import math

import numpy as np

_M64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def mix64(state: int) -> int:
    """splitmix64 finalizer on a 64-bit state."""
    z = state & _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D4A849D95D14BD) & _M64
    return z ^ (z >> 31)


class SplitMix64:
    """Sequential splitmix64 stream."""

    def __init__(self, seed: int):
        self._state = seed & _M64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _M64
        return mix64(self._state)

    def randbelow(self, n: int) -> int:
        """Integer in [0, n). Modulo bias is irrelevant here; determinism is not."""
        return self.next_u64() % n

    def uniform(self) -> float:
        """Float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def normal(self) -> float:
        """Standard normal via Box-Muller on two uniforms."""
        u1 = self.uniform()
        u2 = self.uniform()
        while u1 <= 1e-300:
            u1 = self.uniform()
            u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample_indices(self, n: int, k: int) -> np.ndarray:
        """k distinct indices from range(n), partial Fisher-Yates, sampled order."""
        pool = np.arange(n, dtype=np.int64)
        for i in range(k):
            j = i + self.randbelow(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k].copy()


def derive_seed(master: int, *salts: int) -> int:
    """Stable child seed from a master seed and integer salts."""
    s = master & _M64
    for salt in salts:
        s ^= (salt * _GOLDEN) & _M64
        s = mix64((s + _GOLDEN) & _M64)
    return s
