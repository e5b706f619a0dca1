"""Seeded SplitMix64 generator.

The 64-bit output stream is bit-exact on every platform. Uniform doubles
take the top 53 bits; normals use the Box-Muller transform on consecutive
uniform pairs.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def _mix_int(z: int) -> int:
    z = ((z ^ (z >> 30)) * _M1) & _MASK
    z = ((z ^ (z >> 27)) * _M2) & _MASK
    return z ^ (z >> 31)


class Rng:
    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK
        self.state = self.seed

    def next_u64(self, size: int | None = None):
        if size is None:
            self.state = (self.state + _GAMMA) & _MASK
            return _mix_int(self.state)
        steps = np.arange(1, size + 1, dtype=np.uint64) * np.uint64(_GAMMA)
        out = _mix(steps + np.uint64(self.state))
        self.state = (self.state + size * _GAMMA) & _MASK
        return out

    def uniform(self, size: int | tuple[int, ...] = 1, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """Doubles in ``[low, high)``."""
        shape = (size,) if isinstance(size, int) else tuple(size)
        n = int(np.prod(shape, dtype=np.int64))
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return (low + (high - low) * u).reshape(shape)

    def normal(self, size: int | tuple[int, ...] = 1, scale: float = 1.0) -> np.ndarray:
        shape = (size,) if isinstance(size, int) else tuple(size)
        n = int(np.prod(shape, dtype=np.int64))
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs)
        u1 = 1.0 - u[0::2]  # (0, 1], keeps log finite
        u2 = u[1::2]
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.empty(2 * pairs)
        z[0::2] = r * np.cos(2.0 * np.pi * u2)
        z[1::2] = r * np.sin(2.0 * np.pi * u2)
        return (scale * z[:n]).reshape(shape)

    def randint(self, n: int) -> int:
        """Integer in ``[0, n)``; modulo bias is below 2**-40 for any n used here."""
        return self.next_u64() % n

    def permutation(self, n: int) -> list[int]:
        """Fisher-Yates shuffle of ``range(n)``."""
        order = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.randint(i + 1)
            order[i], order[j] = order[j], order[i]
        return order

    def child(self, key: int) -> "Rng":
        """Independent stream derived from this generator's seed and ``key``."""
        return Rng(_mix_int((self.seed ^ _mix_int((key + 1) * _GAMMA & _MASK)) & _MASK))
