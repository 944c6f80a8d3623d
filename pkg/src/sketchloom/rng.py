"""Counter-based SplitMix64 streams.

Every random draw in the training and augmentation code comes from a stream
keyed by ``(seed, purpose, counters...)``. Because a stream is a pure function
of its key, resuming a run only needs the counters, and results do not depend
on the order in which samples are processed.
"""

from __future__ import annotations

import hashlib

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_MUL2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MUL1
        z = (z ^ (z >> np.uint64(27))) * _MUL2
        return z ^ (z >> np.uint64(31))


def _key_part(part: int | str) -> int:
    if isinstance(part, str):
        return int.from_bytes(hashlib.blake2b(part.encode(), digest_size=8).digest(), "little")
    return int(part) & _MASK64


def derive_seed(*parts: int | str) -> int:
    """Fold integers and strings into one 64-bit seed (platform independent)."""
    acc = np.uint64(0x243F6A8885A308D3)
    with np.errstate(over="ignore"):
        for part in parts:
            acc = _mix(np.array([acc ^ np.uint64(_key_part(part))], dtype=np.uint64))[0] + _GOLDEN
    return int(acc)


class SplitMix64:
    """Deterministic stream; output ``i`` is ``mix(seed + (i + 1) * golden)``."""

    def __init__(self, seed: int, counter: int = 0):
        self.seed = int(seed) & _MASK64
        self.counter = int(counter)

    @classmethod
    def from_key(cls, *parts: int | str) -> "SplitMix64":
        return cls(derive_seed(*parts))

    def spawn(self, *parts: int | str) -> "SplitMix64":
        return SplitMix64(derive_seed(self.seed, *parts))

    def next_u64(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + 1 + n, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            state = np.uint64(self.seed) + idx * _GOLDEN
        return _mix(state)

    def uniform(self, size: int | tuple[int, ...] | None = None) -> np.ndarray | float:
        """Doubles in [0, 1) built from the top 53 bits."""
        n = 1 if size is None else int(np.prod(size))
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
        if size is None:
            return float(u[0])
        return u.reshape(size)

    def uniform_range(self, low: float, high: float) -> float:
        return low + (high - low) * self.uniform()

    def integer(self, low: int, high: int) -> int:
        """Integer in [low, high] inclusive."""
        if high < low:
            raise ValueError(f"empty integer range [{low}, {high}]")
        return low + min(int(self.uniform() * (high - low + 1)), high - low)

    def normal(self, size: int | tuple[int, ...]) -> np.ndarray:
        # Box-Muller on two uniform blocks
        n = int(np.prod(size))
        u1 = self.uniform(n)
        u2 = self.uniform(n)
        r = np.sqrt(-2.0 * np.log1p(-u1))
        return (r * np.cos(2.0 * np.pi * u2)).reshape(size)

    def permutation(self, n: int) -> list[int]:
        items = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.integer(0, i)
            items[i], items[j] = items[j], items[i]
        return items
