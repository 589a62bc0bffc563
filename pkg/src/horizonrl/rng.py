"""Counter-based random streams built on splitmix64.

Everything random in the package (task generation, action sampling, seed
derivation) goes through these helpers so results are bit-identical across
platforms and independent of thread scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_INV_2_53 = 1.0 / (1 << 53)


def splitmix64(x: int) -> int:
    z = (x + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mix(seed: int, *parts: int) -> int:
    """Derive a child seed: ``mix(s, a, b) == mix(mix(s, a), b)``."""
    h = seed & MASK64
    for p in parts:
        h = splitmix64(h ^ splitmix64(p & MASK64))
    return h


@dataclass(frozen=True)
class RngStream:
    """Immutable position in a splitmix64 stream.

    ``uniform()`` returns the draw together with the advanced stream, so the
    caller always threads state explicitly.
    """

    seed: int
    counter: int = 0

    def next_u64(self) -> tuple[int, RngStream]:
        value = splitmix64((self.seed + self.counter * GOLDEN_GAMMA) & MASK64)
        return value, RngStream(self.seed, self.counter + 1)

    def uniform(self) -> tuple[float, RngStream]:
        value, nxt = self.next_u64()
        return (value >> 11) * _INV_2_53, nxt


class SplitMixRandom:
    """Small mutable generator for procedural content (task generators)."""

    def __init__(self, seed: int):
        self._stream = RngStream(seed & MASK64)

    def next_u64(self) -> int:
        value, self._stream = self._stream.next_u64()
        return value

    def random(self) -> float:
        value, self._stream = self._stream.uniform()
        return value

    def randbelow(self, n: int) -> int:
        if n <= 0:
            raise ValueError("n must be positive")
        # rejection sampling keeps the draw unbiased
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            v = self.next_u64()
            if v < limit:
                return v % n

    def randint(self, lo: int, hi: int) -> int:
        return lo + self.randbelow(hi - lo + 1)

    def choice(self, seq):
        return seq[self.randbelow(len(seq))]

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample(self, seq, k: int) -> list:
        pool = list(seq)
        self.shuffle(pool)
        return pool[:k]
