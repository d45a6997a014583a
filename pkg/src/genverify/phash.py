"""Locality-sensitive perceptual hashes and Hamming-tolerant mode selection.

Bit conventions, fixed so independent implementations produce identical
hashes and identical consensus decisions:

- bits are ordered row-major over the thresholded grid; bit 0 is the most
  significant bit of the first serialized byte;
- every threshold is strict (``value > mean``, ``right > left``), so ties
  contribute 0 bits and a constant image hashes to all zeros;
- serialization is fixed-width lowercase hex (16 chars for 64-bit kinds,
  48 for the 192-bit color hash).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .imaging import GrayImage, Image, dct2, resize_box, to_gray

_AHASH_SIDE = 8
_PHASH_RESIZE = 32
_PHASH_BLOCK = 8
_DHASH_W = 9
_DHASH_H = 8


class HashKind(Enum):
    AHASH = "ahash"
    PHASH = "phash"
    DHASH = "dhash"
    CHASH = "chash"

    @property
    def bits(self) -> int:
        return 192 if self is HashKind.CHASH else 64

    @property
    def hex_width(self) -> int:
        return self.bits // 4

    @property
    def words(self) -> int:
        """Number of 64-bit words in the packed representation."""
        return self.bits // 64


@dataclass(frozen=True)
class PerceptualHash:
    """Fixed-length bit vector tagged with its hash kind.

    ``value`` holds the bits as an integer with bit 0 of the hash in the
    most significant position, matching the hex serialization.
    """

    kind: HashKind
    value: int

    def __post_init__(self):
        if not 0 <= self.value < (1 << self.kind.bits):
            raise ValueError(f"value out of range for {self.kind.bits}-bit hash")

    @property
    def hex(self) -> str:
        return format(self.value, f"0{self.kind.hex_width}x")

    def bit(self, i: int) -> int:
        if not 0 <= i < self.kind.bits:
            raise IndexError("bit index out of range")
        return (self.value >> (self.kind.bits - 1 - i)) & 1


@dataclass(frozen=True)
class ToleranceDecision:
    """Mode hash plus the outlier bookkeeping of a tolerant-mode vote."""

    mode_hash: PerceptualHash
    matched_count: int
    outliers: tuple[tuple[int, int], ...]  # (input index, distance to mode)
    avg_outlier_distance: float


def _bits_to_hash(kind: HashKind, bits: np.ndarray) -> PerceptualHash:
    flat = np.asarray(bits, dtype=bool).reshape(-1)
    if flat.size != kind.bits:
        raise ValueError(f"expected {kind.bits} bits, got {flat.size}")
    packed = np.packbits(flat)  # MSB-first, same convention as the hex form
    return PerceptualHash(kind, int.from_bytes(packed.tobytes(), "big"))


def ahash(img: Image) -> PerceptualHash:
    """Average hash: 8x8 luma grid thresholded against its mean."""
    small = resize_box(to_gray(img), _AHASH_SIDE, _AHASH_SIDE).pixels
    return _bits_to_hash(HashKind.AHASH, small > small.mean())


def phash(img: Image) -> PerceptualHash:
    """DCT hash: low-frequency 8x8 block thresholded against its DC-free mean."""
    small = resize_box(to_gray(img), _PHASH_RESIZE, _PHASH_RESIZE)
    coeffs = dct2(small).coeffs[:_PHASH_BLOCK, :_PHASH_BLOCK]
    flat = coeffs.reshape(-1)
    mean = (flat.sum() - flat[0]) / (flat.size - 1)
    return _bits_to_hash(HashKind.PHASH, flat > mean)


def dhash(img: Image) -> PerceptualHash:
    """Difference hash: horizontal gradient signs on a 9x8 luma grid."""
    small = resize_box(to_gray(img), _DHASH_W, _DHASH_H).pixels
    return _bits_to_hash(HashKind.DHASH, small[:, 1:] > small[:, :-1])


def chash(img: Image) -> PerceptualHash:
    """Color hash: per-channel average hash, R then G then B, 192 bits."""
    planes = []
    for c in range(3):
        plane = GrayImage(img.channel(c))
        small = resize_box(plane, _AHASH_SIDE, _AHASH_SIDE).pixels
        planes.append((small > small.mean()).reshape(-1))
    return _bits_to_hash(HashKind.CHASH, np.concatenate(planes))


_HASHERS = {
    HashKind.AHASH: ahash,
    HashKind.PHASH: phash,
    HashKind.DHASH: dhash,
    HashKind.CHASH: chash,
}


def hash_image(img: Image, kind: HashKind) -> PerceptualHash:
    """Dispatch to the hash algorithm for ``kind``."""
    return _HASHERS[kind](img)


def hamming(a: PerceptualHash, b: PerceptualHash) -> int:
    """Number of differing bit positions; requires equal kinds."""
    if a.kind is not b.kind:
        raise ValueError(f"kind mismatch: {a.kind.value} vs {b.kind.value}")
    return (a.value ^ b.value).bit_count()


def encode_hex(h: PerceptualHash) -> str:
    return h.hex


def decode_hex(kind: HashKind, s: str) -> PerceptualHash:
    """Parse fixed-width lowercase hex back into a hash."""
    if len(s) != kind.hex_width:
        raise ValueError(
            f"{kind.value} needs {kind.hex_width} hex chars, got {len(s)}"
        )
    if not all(c in "0123456789abcdef" for c in s):
        raise ValueError(f"invalid hex string {s!r}")
    return PerceptualHash(kind, int(s, 16))


def tolerant_mode(
    hashes: list[PerceptualHash] | tuple[PerceptualHash, ...],
    tolerance: int,
) -> ToleranceDecision:
    """Pick the hash with maximum support within a Hamming tolerance.

    Support of a candidate counts list members (itself included) at
    distance <= tolerance.  Ties break toward the smallest hex encoding
    so every verifier reaches the same decision.  Outliers are the
    members beyond the tolerance ball of the winner.
    """
    if len(hashes) == 0:
        raise ValueError("tolerant_mode needs at least one hash")
    kind = hashes[0].kind
    if any(h.kind is not kind for h in hashes):
        raise ValueError("mixed hash kinds")
    if tolerance < 0:
        raise ValueError("tolerance must be >= 0")

    best_support = -1
    mode = hashes[0]
    for candidate in hashes:
        support = sum(
            1 for other in hashes
            if (candidate.value ^ other.value).bit_count() <= tolerance
        )
        if support > best_support or (
            support == best_support and candidate.value < mode.value
        ):
            best_support = support
            mode = candidate

    outliers = []
    for i, h in enumerate(hashes):
        d = (h.value ^ mode.value).bit_count()
        if d > tolerance:
            outliers.append((i, d))
    avg = sum(d for _, d in outliers) / len(outliers) if outliers else 0.0
    return ToleranceDecision(
        mode_hash=mode,
        matched_count=len(hashes) - len(outliers),
        outliers=tuple(outliers),
        avg_outlier_distance=avg,
    )


def pack_hashes(hashes: list[PerceptualHash] | tuple[PerceptualHash, ...]) -> np.ndarray:
    """Pack equal-kind hashes into a (n, words) uint64 matrix.

    Word 0 holds bits 0..63 (most significant end), matching the hex
    serialization; the XOR+popcount kernels below operate on this layout.
    """
    if len(hashes) == 0:
        raise ValueError("nothing to pack")
    kind = hashes[0].kind
    if any(h.kind is not kind for h in hashes):
        raise ValueError("mixed hash kinds")
    words = kind.words
    out = np.empty((len(hashes), words), dtype=np.uint64)
    mask = (1 << 64) - 1
    for i, h in enumerate(hashes):
        v = h.value
        for w in range(words - 1, -1, -1):
            out[i, w] = v & mask
            v >>= 64
    return out


def popcount_u64(arr: np.ndarray) -> np.ndarray:
    """Per-element population count of a uint64 array."""
    return np.bitwise_count(arr)


def hamming_block(packed: np.ndarray, row: np.ndarray) -> np.ndarray:
    """Hamming distances between one packed hash and a packed batch."""
    return popcount_u64(packed ^ row).sum(axis=1, dtype=np.int64)
