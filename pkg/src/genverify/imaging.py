"""Deterministic image ingestion and the pixel transforms behind every hash.

All intermediate arithmetic is double precision; values are quantized only
when hash bits are thresholded, never here.  Rasters are numpy arrays:
RGB images (height, width, 3) uint8, grayscale (height, width) float64.
"""

from __future__ import annotations

import io
import math
from functools import lru_cache

import numpy as np

# ITU-R BT.601 luma weights, fixed so independent implementations agree.
LUMA_R = 0.299
LUMA_G = 0.587
LUMA_B = 0.114


class ImageParseError(ValueError):
    """Malformed image data; ``offset`` is the failing byte position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class UnsupportedFormatError(ValueError):
    """Syntactically valid image in a variant this toolkit does not decode."""


class Image:
    """Owned RGB8 raster, the unit of hashing input."""

    __slots__ = ("pixels",)

    def __init__(self, pixels: np.ndarray):
        pixels = np.asarray(pixels)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise ValueError("pixels must have shape (height, width, 3)")
        if pixels.shape[0] < 1 or pixels.shape[1] < 1:
            raise ValueError("width and height must be >= 1")
        if pixels.dtype != np.uint8:
            if np.any(pixels < 0) or np.any(pixels > 255):
                raise ValueError("channel values must lie in [0, 255]")
            pixels = pixels.astype(np.uint8)
        self.pixels = pixels

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def channel(self, index: int) -> np.ndarray:
        return self.pixels[:, :, index].astype(np.float64)


class GrayImage:
    """Real-valued luma raster in [0, 255]."""

    __slots__ = ("pixels",)

    def __init__(self, pixels: np.ndarray):
        pixels = np.asarray(pixels, dtype=np.float64)
        if pixels.ndim != 2:
            raise ValueError("pixels must have shape (height, width)")
        if pixels.shape[0] < 1 or pixels.shape[1] < 1:
            raise ValueError("width and height must be >= 1")
        if not np.all(np.isfinite(pixels)):
            raise ValueError("samples must be finite")
        if pixels.min() < 0.0 or pixels.max() > 255.0:
            raise ValueError("samples must lie in [0, 255]")
        self.pixels = pixels

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


class DctBlock:
    """n x n grid of real DCT-II coefficients."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: np.ndarray):
        coeffs = np.asarray(coeffs, dtype=np.float64)
        if coeffs.ndim != 2 or coeffs.shape[0] != coeffs.shape[1]:
            raise ValueError("coeffs must be square")
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("coefficients must be finite")
        self.coeffs = coeffs

    @property
    def n(self) -> int:
        return self.coeffs.shape[0]


def detect_format(data: bytes) -> str:
    """Sniff 'ppm-p6' or 'png' from magic bytes."""
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return "png"
    if data[:2] == b"P6":
        return "ppm-p6"
    raise UnsupportedFormatError("unrecognized image magic bytes")


def load_image(data: bytes, format: str) -> Image:
    """Decode raw file content into an Image, byte-deterministically."""
    if format == "ppm-p6":
        return _load_ppm_p6(data)
    if format == "png":
        return _load_png(data)
    raise UnsupportedFormatError(f"unknown format {format!r}")


def _load_ppm_p6(data: bytes) -> Image:
    pos = 0

    def skip_separators() -> None:
        nonlocal pos
        while pos < len(data):
            c = data[pos : pos + 1]
            if c.isspace():
                pos += 1
            elif c == b"#":
                while pos < len(data) and data[pos : pos + 1] != b"\n":
                    pos += 1
            else:
                return

    def read_token(what: str) -> bytes:
        nonlocal pos
        skip_separators()
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if pos == start:
            raise ImageParseError(f"missing {what}", start)
        return data[start:pos]

    def read_int(what: str) -> int:
        start = pos
        token = read_token(what)
        if not token.isdigit():
            raise ImageParseError(f"{what} is not a decimal integer", start)
        return int(token)

    magic = data[:2]
    if magic != b"P6":
        raise ImageParseError("expected P6 magic", 0)
    pos = 2
    width = read_int("width")
    height = read_int("height")
    if width < 1 or height < 1:
        raise ImageParseError("dimensions must be positive", pos)
    maxval_at = pos
    maxval = read_int("maxval")
    if maxval != 255:
        raise UnsupportedFormatError(
            f"only maxval 255 is supported, got {maxval} at offset {maxval_at}"
        )
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise ImageParseError("expected single whitespace after maxval", pos)
    pos += 1
    need = 3 * width * height
    body = data[pos : pos + need]
    if len(body) < need:
        raise ImageParseError(
            f"truncated pixel data, need {need} bytes", pos + len(body)
        )
    pixels = np.frombuffer(body, dtype=np.uint8).reshape(height, width, 3)
    return Image(pixels.copy())


def _load_png(data: bytes) -> Image:
    if data[:8] != b"\x89PNG\r\n\x1a\n":
        raise ImageParseError("bad PNG signature", 0)
    if len(data) < 26 or data[12:16] != b"IHDR":
        raise ImageParseError("missing IHDR chunk", 12)
    bit_depth = data[24]
    color_type = data[25]
    if bit_depth != 8 or color_type not in (2, 6):  # 2 = RGB, 6 = RGBA
        raise UnsupportedFormatError(
            f"only 8-bit RGB/RGBA PNG supported "
            f"(bit depth {bit_depth}, color type {color_type})"
        )
    try:
        from PIL import Image as PILImage

        with PILImage.open(io.BytesIO(data)) as im:
            im.load()
            raw = np.asarray(im)
    except UnsupportedFormatError:
        raise
    except Exception as exc:
        raise ImageParseError(f"PNG decode failed: {exc}", 0) from exc
    if raw.ndim != 3 or raw.shape[2] not in (3, 4):
        raise UnsupportedFormatError(f"unexpected decoded PNG shape {raw.shape}")
    return Image(raw[:, :, :3].copy())  # alpha discarded


def to_gray(img: Image) -> GrayImage:
    """BT.601 luma, double precision, unrounded."""
    p = img.pixels.astype(np.float64)
    luma = LUMA_R * p[:, :, 0] + LUMA_G * p[:, :, 1] + LUMA_B * p[:, :, 2]
    return GrayImage(luma)


@lru_cache(maxsize=64)
def _box_weights(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) area-overlap weights; each row sums to 1."""
    scale = n_in / n_out
    w = np.zeros((n_out, n_in))
    for i in range(n_out):
        lo = i * scale
        hi = (i + 1) * scale
        for j in range(int(math.floor(lo)), min(int(math.ceil(hi)), n_in)):
            cover = min(j + 1.0, hi) - max(float(j), lo)
            if cover > 0.0:
                w[i, j] = cover
    w /= scale
    w.setflags(write=False)
    return w


def resize_box_array(pixels: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Area-weighted box downsampling of a 2-D float array."""
    h, w = pixels.shape
    if out_w < 1 or out_h < 1:
        raise ValueError("output dimensions must be >= 1")
    if out_w > w or out_h > h:
        raise ValueError(
            f"upscaling not supported: {w}x{h} -> {out_w}x{out_h}"
        )
    wr = _box_weights(h, out_h)
    wc = _box_weights(w, out_w)
    out = wr @ pixels @ wc.T
    # Area means of in-range samples are in range; clamp the <= 1-ulp
    # float excursions so the [0, 255] invariant holds exactly.
    return np.clip(out, 0.0, 255.0)


def resize_box(img: GrayImage, out_w: int, out_h: int) -> GrayImage:
    """Downsample so each output sample is the area mean of its cell."""
    return GrayImage(resize_box_array(img.pixels, out_w, out_h))


@lru_cache(maxsize=16)
def _dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix: C[k, t] = alpha(k) cos(pi (2t+1) k / 2n)."""
    k = np.arange(n).reshape(-1, 1)
    t = np.arange(n).reshape(1, -1)
    c = np.cos(np.pi * (2 * t + 1) * k / (2 * n))
    c *= math.sqrt(2.0 / n)
    c[0, :] *= 1.0 / math.sqrt(2.0)
    c.setflags(write=False)
    return c


# Coefficients this small relative to the spectrum peak are rounding
# residue of analytically-zero values; flushing them to exact zero keeps
# degenerate spectra (constant blocks) exactly DC-only, which downstream
# bit thresholds rely on.  Real coefficients sit many orders above this.
_DCT_FLUSH_RELATIVE = 1e-12


def dct2(block: GrayImage) -> DctBlock:
    """Orthonormal 2-D DCT-II of a square luma block.

    Output X[u, v] pairs u with the horizontal axis and v with the
    vertical axis:

        X[u, v] = a(u) a(v) sum_x sum_y s[y, x]
                  cos(pi (2x+1) u / 2n) cos(pi (2y+1) v / 2n)

    with a(0) = sqrt(1/n) and a(k>0) = sqrt(2/n), evaluated separably
    (rows, then columns) in double precision.
    """
    if block.width != block.height:
        raise ValueError("dct2 requires a square block")
    n = block.width
    if n < 2:
        raise ValueError("dct2 requires n >= 2")
    c = _dct_matrix(n)
    s = block.pixels
    coeffs = c @ s.T @ c.T
    peak = np.abs(coeffs).max()
    if peak > 0.0:
        coeffs[np.abs(coeffs) < _DCT_FLUSH_RELATIVE * peak] = 0.0
    return DctBlock(coeffs)


def idct2(block: DctBlock) -> np.ndarray:
    """Inverse of dct2; returns the reconstructed raster s[y, x]."""
    c = _dct_matrix(block.n)
    return (c.T @ block.coeffs @ c).T
