"""Seedable xorshift64* generator with pure integer state.

Sampling must be reproducible bit-for-bit from a seed, across runs and across
platforms, so the generator is pinned down by its algorithm rather than
delegated to library defaults that may change between versions.  State
transitions use only 64-bit integer shifts and xors; floats appear only in the
final output scaling, which is an exact dyadic operation.

Algorithm, per step:

    x ^= x >> 12
    x ^= (x << 25) mod 2^64
    x ^= x >> 27
    output = (x * 0x2545F4914F6CDD1D mod 2^64) >> 11

The 53 output bits are scaled by 2^-53 to a double in [0, 1).  Seeds pass
through one round of splitmix64 so that small consecutive seeds give
decorrelated streams; a zero post-mix state falls back to the golden-ratio
constant because the all-zero state is a fixed point of xorshift.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidParameterError

_MASK = (1 << 64) - 1
_STAR = 0x2545F4914F6CDD1D
_GOLDEN = 0x9E3779B97F4A7C15
_INV_2_53 = 2.0**-53


def _splitmix64(z: int) -> int:
    z = (z + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


class Xorshift64Star:
    """Deterministic 64-bit shift-register generator."""

    def __init__(self, seed: int):
        if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool):
            raise InvalidParameterError("seed must be an integer")
        self.seed = int(seed)
        self._state = _splitmix64(int(seed) & _MASK)
        if self._state == 0:
            self._state = _GOLDEN

    def next_u64(self) -> int:
        """Advance one step, return 64 scrambled bits."""
        x = self._state
        x ^= x >> 12
        x = (x ^ (x << 25)) & _MASK
        x ^= x >> 27
        self._state = x
        return (x * _STAR) & _MASK

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * _INV_2_53

    def uniforms(self, count: int) -> np.ndarray:
        """Next `count` doubles in [0, 1) as a float64 array."""
        out = np.empty(count, dtype=np.float64)
        x = self._state
        for i in range(count):
            x ^= x >> 12
            x = (x ^ (x << 25)) & _MASK
            x ^= x >> 27
            out[i] = ((x * _STAR & _MASK) >> 11) * _INV_2_53
        self._state = x
        return out
