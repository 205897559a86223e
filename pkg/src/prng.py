"""SplitMix64 generator used for every random sample set.

Update rule (all arithmetic modulo 2**64):

    state = state + 0x9E3779B97F4A7C15
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    output = z ^ (z >> 31)

A uniform double in [0, 1) is (output >> 11) * 2**-53.
"""

from typing import Sequence, Tuple

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


class SplitMix64:
    def __init__(self, seed: int):
        self.state = int(seed) & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def uniform_array(self, low: Sequence[float], high: Sequence[float], count: int) -> np.ndarray:
        """Draw `count` points uniformly in the box [low, high], row by row"""
        low = np.asarray(low, dtype=float)
        high = np.asarray(high, dtype=float)
        out = np.empty((count, low.size))
        for i in range(count):
            for j in range(low.size):
                out[i, j] = low[j] + (high[j] - low[j]) * self.uniform()
        return out

    def normal(self) -> float:
        # Box-Muller on two uniforms; the first uniform is shifted away from 0
        u1 = 1.0 - self.uniform()
        u2 = self.uniform()
        return float(np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2))


def uniform_samples(bounds: Sequence[Tuple[float, float]], count: int, seed: int) -> np.ndarray:
    """Uniform samples in a box given as [(low, high), ...]"""
    if count <= 0:
        raise ValueError("sample count must be positive")
    low = [b[0] for b in bounds]
    high = [b[1] for b in bounds]
    return SplitMix64(seed).uniform_array(low, high, count)
