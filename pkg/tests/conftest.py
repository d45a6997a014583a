"""Shared fixture images and oracle helpers.

Fixture rasters are 288x288: every hash-pipeline resize (to 8, 9, and 32)
is then an integer ratio, so constant regions produce bit-identical cells
and the hand-derived hash vectors are exact.
"""

import math

import numpy as np
import pytest

from genverify.imaging import Image

FIXTURE_SIDE = 288


def rgb(array) -> Image:
    return Image(np.asarray(array, dtype=np.uint8))


def gray_rgb(plane) -> Image:
    plane = np.asarray(plane, dtype=np.uint8)
    return Image(np.stack([plane, plane, plane], axis=-1))


@pytest.fixture
def constant_image() -> Image:
    return rgb(np.full((FIXTURE_SIDE, FIXTURE_SIDE, 3), 137))


@pytest.fixture
def black_image() -> Image:
    return rgb(np.zeros((FIXTURE_SIDE, FIXTURE_SIDE, 3)))


@pytest.fixture
def half_plane_image() -> Image:
    """Left half black, right half white."""
    px = np.zeros((FIXTURE_SIDE, FIXTURE_SIDE, 3))
    px[:, FIXTURE_SIDE // 2 :, :] = 255
    return rgb(px)


@pytest.fixture
def gradient_image() -> Image:
    """Luma strictly increasing left to right in every row."""
    ramp = (np.arange(FIXTURE_SIDE) * 255) // (FIXTURE_SIDE - 1)
    return gray_rgb(np.tile(ramp, (FIXTURE_SIDE, 1)))


@pytest.fixture
def striped_image() -> Image:
    """Nine vertical stripes alternating 0/255 (32 px each)."""
    cols = ((np.arange(FIXTURE_SIDE) // 32) % 2) * 255
    return gray_rgb(np.tile(cols, (FIXTURE_SIDE, 1)))


@pytest.fixture
def two_color_image() -> Image:
    """Red left half, blue right half."""
    px = np.zeros((FIXTURE_SIDE, FIXTURE_SIDE, 3))
    px[:, : FIXTURE_SIDE // 2, 0] = 255
    px[:, FIXTURE_SIDE // 2 :, 2] = 255
    return rgb(px)


def make_ppm(pixels: np.ndarray) -> bytes:
    """Hand-written binary P6 encoder for test inputs."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    h, w, _ = pixels.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


def dct2_direct(samples: np.ndarray) -> np.ndarray:
    """O(n^4) direct-sum DCT-II oracle, independent of the matmul path.

    X[u, v] = a(u) a(v) sum_x sum_y s[y, x]
              cos(pi (2x+1) u / 2n) cos(pi (2y+1) v / 2n)
    """
    n = samples.shape[0]
    assert samples.shape == (n, n)
    cos_table = [
        [math.cos(math.pi * (2 * t + 1) * k / (2 * n)) for t in range(n)]
        for k in range(n)
    ]
    alpha = [math.sqrt(1.0 / n)] + [math.sqrt(2.0 / n)] * (n - 1)
    out = np.empty((n, n))
    for u in range(n):
        for v in range(n):
            acc = 0.0
            for x in range(n):
                cux = cos_table[u][x]
                for y in range(n):
                    acc += samples[y][x] * cux * cos_table[v][y]
            out[u, v] = alpha[u] * alpha[v] * acc
    return out


def tolerant_mode_oracle(values: list[int], bits: int, tolerance: int):
    """Exhaustive support-count oracle for tolerant-mode selection.

    Distances via bit-string comparison (not XOR/popcount), support by
    explicit recount for every member as center.
    """

    def distance(a: int, b: int) -> int:
        sa = format(a, f"0{bits}b")
        sb = format(b, f"0{bits}b")
        return sum(1 for x, y in zip(sa, sb) if x != y)

    supports = [
        sum(1 for other in values if distance(center, other) <= tolerance)
        for center in values
    ]
    best = max(supports)
    mode = min(v for v, s in zip(values, supports) if s == best)
    outliers = [
        (i, distance(v, mode)) for i, v in enumerate(values)
        if distance(v, mode) > tolerance
    ]
    avg = sum(d for _, d in outliers) / len(outliers) if outliers else 0.0
    return mode, len(values) - len(outliers), outliers, avg
