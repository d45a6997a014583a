"""Counter-based pseudo-random streams shared by all simulation modules.

The generator is SplitMix64 in counter mode: output ``i`` of a stream with
seed ``s`` is ``mix64((s + (i + 1) * GOLDEN_GAMMA) mod 2**64)`` where
``mix64`` is the murmur-style 64-bit finalizer below.  The constants are:

    GOLDEN_GAMMA = 0x9E3779B97F4A7C15
    mix64(z):  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9   (mod 2**64)
               z = (z ^ (z >> 27)) * 0x94D049BB133111EB   (mod 2**64)
               return z ^ (z >> 31)

Every output is a pure function of (seed, counter), so streams replay
identically regardless of whether values are drawn one at a time or in
vectorized blocks, and any implementation following these constants
reproduces the same sequences bit for bit.

Derived values:

    uniform:  (next_u64() >> 11) * 2**-53            in [0, 1)
    randrange(n):  next_u64() % n                    (bias < n / 2**64)
    normal:  Box-Muller from exactly two u64 draws
             z = sqrt(-2 ln u1) * cos(2 pi u2),  u1 in (0, 1]

Sub-stream keys are derived by folding labels into an accumulator:
``derive_seed(p0, p1, ...)`` starts from mix64(GOLDEN_GAMMA) and applies
``acc = mix64(acc ^ mix64(part))`` per part; strings fold their UTF-8
bytes in 8-byte little-endian chunks, length first.
"""

from __future__ import annotations

import math
import os

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MIX_MUL_1 = 0xBF58476D1CE4E5B9
_MIX_MUL_2 = 0x94D049BB133111EB

_TWO_NEG_53 = 2.0 ** -53


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a 64-bit integer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX_MUL_1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX_MUL_2) & MASK64
    return z ^ (z >> 31)


def _mix64_block(z: np.ndarray) -> np.ndarray:
    """mix64 over a uint64 array (wrapping arithmetic)."""
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(_MIX_MUL_1)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(_MIX_MUL_2)
    return z ^ (z >> np.uint64(31))


def _fold(acc: int, value: int) -> int:
    return mix64(acc ^ mix64(value & MASK64))


def derive_seed(*parts: int | str) -> int:
    """Derive a stream seed from labels (ints or strings), order-sensitive."""
    acc = mix64(GOLDEN_GAMMA)
    for part in parts:
        if isinstance(part, str):
            raw = part.encode("utf-8")
            acc = _fold(acc, len(raw))
            for i in range(0, len(raw), 8):
                acc = _fold(acc, int.from_bytes(raw[i : i + 8], "little"))
        else:
            acc = _fold(acc, int(part))
    return acc


def fresh_seed() -> int:
    """Nondeterministic 64-bit seed from OS entropy (for `free` streams)."""
    return int.from_bytes(os.urandom(8), "little")


class Stream:
    """A seeded SplitMix64 counter stream.

    Scalar draws and block draws consume the same underlying counter, so
    mixing them (or replaying a scalar run with block calls) yields
    identical values.
    """

    def __init__(self, seed: int):
        self.seed = seed & MASK64
        self.counter = 0

    def next_u64(self) -> int:
        value = mix64((self.seed + (self.counter + 1) * GOLDEN_GAMMA) & MASK64)
        self.counter += 1
        return value

    def u64_block(self, count: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + count + 1, dtype=np.uint64)
        self.counter += count
        return _mix64_block(np.uint64(self.seed) + idx * np.uint64(GOLDEN_GAMMA))

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        u = (self.next_u64() >> 11) * _TWO_NEG_53
        return lo + (hi - lo) * u

    def uniform_block(self, count: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        u = (self.u64_block(count) >> np.uint64(11)).astype(np.float64) * _TWO_NEG_53
        return lo + (hi - lo) * u

    def randrange(self, n: int) -> int:
        if n <= 0:
            raise ValueError("randrange needs n >= 1")
        return self.next_u64() % n

    def chance(self, p: float) -> bool:
        return self.uniform() < p

    def normal(self) -> float:
        u1 = ((self.next_u64() >> 11) + 1) * _TWO_NEG_53  # (0, 1]
        u2 = (self.next_u64() >> 11) * _TWO_NEG_53
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def normal_block(self, count: int) -> np.ndarray:
        raw = self.u64_block(2 * count) >> np.uint64(11)
        u1 = (raw[0::2].astype(np.float64) + 1.0) * _TWO_NEG_53
        u2 = raw[1::2].astype(np.float64) * _TWO_NEG_53
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
