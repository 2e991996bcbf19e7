"""Portable deterministic random numbers.

Everything that involves chance (malleable-job selection, synthetic
workload generation) draws from SplitMix64 so that a seed reproduces the
same stream in any language, independent of Python's own RNG.

SplitMix64 (Steele, Lea & Flood; public domain reference constants):

    state     += 0x9E3779B97F4A7C15          (mod 2^64)
    z          = state
    z          = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z          = (z ^ (z >> 27)) * 0x94D049BB133111EB
    output     = z ^ (z >> 31)

Derived draws are specified exactly so they can be re-implemented:

* ``random()``     -- top 53 bits of the next output, divided by 2^53.
* ``below(n)``     -- next output modulo n.
* ``sample_indices(n, k)`` -- partial Fisher-Yates over [0, n) using
  ``below`` for each swap; the first k slots are the sample, returned
  in ascending order.
"""

from __future__ import annotations

import math

_MASK = 0xFFFFFFFFFFFFFFFF
_GAMMA = 0x9E3779B97F4A7C15


class SplitMix64:
    """64-bit SplitMix64 generator with a fixed, documented stream."""

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        if n <= 0:
            raise ValueError("below() requires n >= 1")
        return self.next_u64() % n

    def expovariate(self, mean: float) -> float:
        """Exponential variate with the given mean."""
        return -math.log(1.0 - self.random()) * mean

    def sample_indices(self, n: int, k: int) -> list[int]:
        """k distinct indices from [0, n), uniform, ascending order."""
        if not 0 <= k <= n:
            raise ValueError(f"cannot sample {k} of {n}")
        idx = list(range(n))
        for i in range(k):
            j = i + self.below(n - i)
            idx[i], idx[j] = idx[j], idx[i]
        return sorted(idx[:k])
