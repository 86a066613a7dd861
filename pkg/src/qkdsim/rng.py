"""Deterministic, portable random source.

Every random decision in a session goes through :class:`RandomSource`, a
SplitMix64 generator (Steele, Lea & Flood 2014). SplitMix64 is counter based:
the k-th output (k = 1, 2, ...) for seed ``s`` is ``mix(s + k * GAMMA)`` with
all arithmetic mod 2**64, so any implementation in any language reproduces the
same stream. Derived draws are defined on top of the raw 64-bit words:

* ``bit()``      -- top bit of one word
* ``random()``   -- ``(word >> 11) * 2**-53``
* ``below(n)``   -- rejection sampling: redraw while ``word >= 2**64 - 2**64 % n``,
                    then ``word % n``
* ``sample``     -- partial Fisher-Yates over ``range(n)``, result sorted
* ``permutation``-- full Fisher-Yates, ``i`` from ``n-1`` down to ``1``,
                    swapping ``i`` with ``below(i + 1)``
"""

from __future__ import annotations

import hashlib

import numpy as np

GAMMA = 0x9E3779B97F4A7C15
MASK64 = (1 << 64) - 1
_C1 = 0xBF58476D1CE4E5B9
_C2 = 0x94D049BB133111EB
_BLOCK = 1024


def splitmix64_mix(z: int) -> int:
    """The SplitMix64 output finalizer on a single 64-bit word."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _C1) & MASK64
    z = ((z ^ (z >> 27)) * _C2) & MASK64
    return z ^ (z >> 31)


def derive_seed(root: int, *labels: object) -> int:
    """Derive an independent 64-bit seed from ``root`` and a label path.

    Defined as the first 8 bytes (big-endian) of SHA-256 over the UTF-8 text
    ``"root:label1:label2..."``.
    """
    text = ":".join([str(int(root))] + [str(label) for label in labels])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")


class RandomSource:
    """Seeded SplitMix64 stream. Not thread safe; one owner at a time."""

    def __init__(self, seed: int) -> None:
        self.seed = int(seed) & MASK64
        self._counter = 0  # outputs generated so far
        self._buf: list[int] = []
        self._pos = 0

    def __repr__(self) -> str:
        return f"RandomSource(seed={self.seed:#x}, drawn={self.drawn})"

    @property
    def drawn(self) -> int:
        return self._counter - len(self._buf) + self._pos

    def _refill(self) -> None:
        k = np.arange(self._counter + 1, self._counter + 1 + _BLOCK, dtype=np.uint64)
        z = np.uint64(self.seed) + k * np.uint64(GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_C1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_C2)
        z = z ^ (z >> np.uint64(31))
        self._buf = z.tolist()
        self._pos = 0
        self._counter += _BLOCK

    def next_u64(self) -> int:
        if self._pos >= len(self._buf):
            self._refill()
        value = self._buf[self._pos]
        self._pos += 1
        return value

    def bit(self) -> int:
        return self.next_u64() >> 63

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def bernoulli(self, p: float) -> bool:
        return self.random() < p

    def below(self, n: int) -> int:
        if n <= 0:
            raise ValueError("below() needs a positive bound")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def choice(self, options):
        return options[self.below(len(options))]

    def sample(self, n: int, k: int) -> list[int]:
        """Uniform k-subset of ``range(n)``, sorted ascending."""
        if not 0 <= k <= n:
            raise ValueError(f"cannot sample {k} of {n}")
        pool = list(range(n))
        for i in range(k):
            j = i + self.below(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return sorted(pool[:k])

    def permutation(self, n: int) -> list[int]:
        perm = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.below(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm
