"""Deterministic 64-bit generator for permutation sampling.

All shuffling in this library runs on a splitmix64 sequence rather than a
platform RNG so that permutations are reproducible bit-exactly across
machines and library versions.  Each epoch gets its own substream derived
by hashing (seed, epoch), which makes single epochs replayable without
generating their predecessors.

The algorithm identifier below is recorded in every run manifest; a trace
can only be replayed exactly by a build advertising the same identifier.
"""

from __future__ import annotations

ALGORITHM_ID = "fisher-yates-desc/splitmix64/v1"

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    """splitmix64 finalizer: one full avalanche of a 64-bit word."""
    z = (z + _GAMMA) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """splitmix64 stream of 64-bit words with unbiased bounded draws."""

    def __init__(self, state: int):
        self._state = state & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, bound: int) -> int:
        """Uniform draw from [0, bound) via rejection; no modulo bias."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        limit = (1 << 64) - ((1 << 64) % bound)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % bound


def epoch_stream(seed: int, epoch: int) -> SplitMix64:
    """Substream for one epoch, independent of all other epochs."""
    return SplitMix64(mix64(seed & _MASK64) ^ mix64((epoch * _GAMMA + 1) & _MASK64))


def fisher_yates(n: int, stream: SplitMix64) -> list[int]:
    """Fisher-Yates shuffle of range(n) with draws in descending index order."""
    idx = list(range(n))
    for i in range(n - 1, 0, -1):
        j = stream.below(i + 1)
        idx[i], idx[j] = idx[j], idx[i]
    return idx
