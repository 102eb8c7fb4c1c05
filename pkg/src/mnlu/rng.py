"""Deterministic randomness for corpus construction.

Everything that shuffles or samples goes through :class:`SplitMix64` so that a
corpus rebuilt from the same seeds is byte-identical on any platform and any
Python version (``random.Random`` makes no such promise for ``shuffle`` and
``sample``).

SplitMix64 (Steele, Lea & Flood 2014) advances a 64-bit state by the golden
gamma ``0x9E3779B97F4A7C15`` and returns the state passed through a
two-multiply avalanche finaliser.
"""

from __future__ import annotations

import hashlib
from typing import MutableSequence, Sequence, TypeVar

T = TypeVar("T")

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15


def derive_seed(*parts: object) -> int:
    """Hash arbitrary parts into a 64-bit seed (BLAKE2b, little-endian)."""
    payload = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


class SplitMix64:
    def __init__(self, seed: int) -> None:
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GAMMA) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        """Uniform integer in ``[0, n)`` by rejection, so there is no modulo bias."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def random(self) -> float:
        """Uniform float in ``[0, 1)`` with 53 bits of precision."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def shuffle(self, items: MutableSequence[T]) -> None:
        # Fisher-Yates, high index down
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample(self, items: Sequence[T], k: int) -> list[T]:
        """``k`` distinct positions drawn uniformly, in draw order."""
        if not 0 <= k <= len(items):
            raise ValueError(f"cannot sample {k} from {len(items)} items")
        pool = list(range(len(items)))
        # partial Fisher-Yates from the front
        for i in range(k):
            j = i + self.below(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
        return [items[p] for p in pool[:k]]

    def choice(self, items: Sequence[T]) -> T:
        return items[self.below(len(items))]
