"""SplitMix64 random stream with fixed uniform and Gaussian transforms.

The algorithm is fully specified here so synthetic traces are reproducible
from the seed alone, independent of numpy's generator versions:

* state advances by the golden-ratio increment ``0x9E3779B97F4A7C15``;
* output is the SplitMix64 finalizer of the new state;
* uniforms are the top 53 bits scaled by ``2**-53`` (range ``[0, 1)``);
* each Gaussian consumes two uniforms ``u1, u2`` and returns
  ``sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`` (Box-Muller, cosine branch only).
"""

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed: int):
        if not 0 <= int(seed) <= _MASK:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        self._state = int(seed)
        self.draws = 0

    def next_u64(self, size: int) -> np.ndarray:
        steps = np.arange(1, size + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self._state) + steps * _GAMMA
            z = (z ^ (z >> np.uint64(30))) * _M1
            z = (z ^ (z >> np.uint64(27))) * _M2
            z = z ^ (z >> np.uint64(31))
        self._state = (self._state + size * int(_GAMMA)) & _MASK
        self.draws += size
        return z

    def uniform(self, size: int) -> np.ndarray:
        return (self.next_u64(size) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normal(self, size: int) -> np.ndarray:
        u = self.uniform(2 * size)
        u1, u2 = u[0::2], u[1::2]
        return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)
