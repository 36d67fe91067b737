"""Deterministic randomness shared by all pipeline stages.

Everything that needs a random draw (prompt rendering, batch sampling,
recipe materialization) goes through the 64-bit splitmix generator below
so runs are reproducible across processes, platforms and parallelism
levels. Test vectors for the generator are frozen in the test suite; do
not change the constants without updating them.
"""

from __future__ import annotations

import hashlib

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SplitMix64:
    """splitmix64 stream: tiny, fast, and identical on every platform."""

    __slots__ = ("_state",)

    def __init__(self, seed: int) -> None:
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def next_float(self) -> float:
        """Uniform draw in [0, 1): 53 high bits over 2^53."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def next_index(self, n: int) -> int:
        if n <= 0:
            raise ValueError("n must be positive")
        return self.next_u64() % n


def stable_hash64(*parts: str) -> int:
    """Order-sensitive 64-bit hash of strings, stable across processes."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(part.encode("utf-8"))
        h.update(b"\x00")
    return int.from_bytes(h.digest(), "big")


def seeded_shuffle(items: list, seed: int) -> list:
    """Fisher-Yates shuffle driven by a splitmix stream; input untouched."""
    out = list(items)
    rng = SplitMix64(seed)
    for i in range(len(out) - 1, 0, -1):
        j = rng.next_index(i + 1)
        out[i], out[j] = out[j], out[i]
    return out
