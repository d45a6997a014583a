import io

import numpy as np
import pytest

from genverify.imaging import (
    GrayImage,
    Image,
    ImageParseError,
    UnsupportedFormatError,
    dct2,
    detect_format,
    idct2,
    load_image,
    resize_box,
    resize_box_array,
    to_gray,
)
from genverify.rng import Stream

from conftest import dct2_direct, make_ppm


# ---------------------------------------------------------------------------
# load_image


def test_ppm_p6_hand_written():
    data = b"P6 2 1 255 " + bytes([255, 0, 0, 0, 0, 255])
    img = load_image(data, "ppm-p6")
    assert (img.width, img.height) == (2, 1)
    assert img.pixels[0, 0].tolist() == [255, 0, 0]
    assert img.pixels[0, 1].tolist() == [0, 0, 255]


def test_ppm_p6_with_comments_and_newlines():
    data = b"P6\n# a comment\n2 2\n255\n" + bytes(range(12))
    img = load_image(data, "ppm-p6")
    assert img.pixels[1, 1].tolist() == [9, 10, 11]


def test_ppm_truncated_body_is_parse_error():
    data = b"P6 2 2 255 " + bytes(5)
    with pytest.raises(ImageParseError) as err:
        load_image(data, "ppm-p6")
    assert err.value.offset == 11 + 5


def test_ppm_bad_magic_is_parse_error_at_offset_zero():
    with pytest.raises(ImageParseError) as err:
        load_image(b"P5 1 1 255 \x00", "ppm-p6")
    assert err.value.offset == 0


def test_ppm_non_integer_header():
    with pytest.raises(ImageParseError):
        load_image(b"P6 two 1 255 \x00\x00\x00", "ppm-p6")


def test_ppm_maxval_other_than_255_unsupported():
    with pytest.raises(UnsupportedFormatError):
        load_image(b"P6 1 1 65535 \x00\x00\x00\x00\x00\x00", "ppm-p6")


def test_ppm_round_trip_through_encoder():
    rng = np.random.default_rng(0)
    px = rng.integers(0, 256, (5, 7, 3)).astype(np.uint8)
    img = load_image(make_ppm(px), "ppm-p6")
    np.testing.assert_array_equal(img.pixels, px)


def _png_bytes(px: np.ndarray, mode: str) -> bytes:
    from PIL import Image as PILImage

    buf = io.BytesIO()
    PILImage.fromarray(px, mode=mode).save(buf, format="PNG")
    return buf.getvalue()


def test_png_1x1_identity_decode():
    data = _png_bytes(np.array([[[7, 8, 9]]], dtype=np.uint8), "RGB")
    img = load_image(data, "png")
    assert img.pixels.tolist() == [[[7, 8, 9]]]


def test_png_rgba_alpha_discarded():
    px = np.array([[[10, 20, 30, 77], [1, 2, 3, 0]]], dtype=np.uint8)
    img = load_image(_png_bytes(px, "RGBA"), "png")
    np.testing.assert_array_equal(img.pixels, px[:, :, :3])


def test_png_16_bit_unsupported():
    data = bytearray(_png_bytes(np.zeros((1, 1, 3), dtype=np.uint8), "RGB"))
    data[24] = 16  # IHDR bit depth byte
    with pytest.raises(UnsupportedFormatError):
        load_image(bytes(data), "png")


def test_png_palette_unsupported():
    from PIL import Image as PILImage

    buf = io.BytesIO()
    PILImage.new("P", (2, 2)).save(buf, format="PNG")
    with pytest.raises(UnsupportedFormatError):
        load_image(buf.getvalue(), "png")


def test_png_bad_signature():
    with pytest.raises(ImageParseError):
        load_image(b"\x89PNX" + b"\x00" * 30, "png")


def test_detect_format():
    assert detect_format(b"P6 1 1 255 \x00\x00\x00") == "ppm-p6"
    assert detect_format(_png_bytes(np.zeros((1, 1, 3), dtype=np.uint8), "RGB")) == "png"
    with pytest.raises(UnsupportedFormatError):
        detect_format(b"GIF89a")


# ---------------------------------------------------------------------------
# to_gray


def test_to_gray_reference_values():
    img = Image(np.array([[[255, 255, 255], [0, 0, 0], [255, 0, 0]]], dtype=np.uint8))
    luma = to_gray(img).pixels[0]
    assert luma[0] == 255.0
    assert luma[1] == 0.0
    assert abs(luma[2] - 76.245) < 1e-9  # 0.299 * 255


def test_to_gray_monotone_per_channel():
    stream = Stream(21)
    for _ in range(200):
        base = [stream.randrange(255) for _ in range(3)]
        ch = stream.randrange(3)
        bumped = list(base)
        bumped[ch] += 1
        lo = to_gray(Image(np.array([[base]], dtype=np.uint8))).pixels[0, 0]
        hi = to_gray(Image(np.array([[bumped]], dtype=np.uint8))).pixels[0, 0]
        assert hi > lo


# ---------------------------------------------------------------------------
# resize_box


def test_resize_constant_stays_constant():
    for n_in, n_out in [(8, 8), (64, 8), (288, 9), (288, 32), (512, 8)]:
        g = GrayImage(np.full((n_in, n_in), 77.0))
        out = resize_box(g, n_out, n_out).pixels
        np.testing.assert_array_equal(out, np.full((n_out, n_out), 77.0))


def test_resize_constant_arbitrary_ratio_near_exact():
    # fractional ratios keep constancy only to float rounding
    g = GrayImage(np.full((100, 100), 201.0))
    out = resize_box(g, 7, 7).pixels
    assert np.abs(out - 201.0).max() < 1e-11


def test_resize_2x2_to_1x1_plain_mean():
    g = GrayImage(np.array([[0.0, 100.0], [200.0, 255.0]]))
    out = resize_box(g, 1, 1).pixels
    assert abs(out[0, 0] - 138.75) < 1e-12


def test_resize_3x1_to_2x1_fractional_area_weights():
    # hand-evaluated: cells cover 1+0.5 and 0.5+1 pixels of width 1.5
    g = GrayImage(np.array([[0.0, 90.0, 30.0]]))
    out = resize_box(g, 2, 1).pixels
    assert abs(out[0, 0] - 30.0) < 1e-12
    assert abs(out[0, 1] - 50.0) < 1e-12


def test_resize_preserves_global_mean_when_divisible():
    stream = Stream(3)
    px = stream.uniform_block(64 * 64, 0.0, 255.0).reshape(64, 64)
    out = resize_box_array(px, 8, 16)
    assert abs(out.mean() - px.mean()) < 1e-9


def test_resize_upscale_rejected():
    g = GrayImage(np.zeros((4, 4)))
    with pytest.raises(ValueError):
        resize_box(g, 8, 4)
    with pytest.raises(ValueError):
        resize_box(g, 4, 8)


# ---------------------------------------------------------------------------
# dct2


def test_dct2_constant_block_is_dc_only():
    g = GrayImage(np.full((32, 32), 19.0))
    coeffs = dct2(g).coeffs
    assert abs(coeffs[0, 0] - 32 * 19.0) < 1e-9
    rest = coeffs.copy()
    rest[0, 0] = 0.0
    assert np.abs(rest).max() < 1e-9
    assert np.count_nonzero(rest) == 0  # exactly zero, not just small


def test_dct2_identity_2x2_hand_values():
    g = GrayImage(np.array([[1.0, 0.0], [0.0, 1.0]]))
    coeffs = dct2(g).coeffs
    expected = np.array([[1.0, 0.0], [0.0, 1.0]])
    np.testing.assert_allclose(coeffs, expected, atol=1e-12)


def test_dct2_orientation_pairs_u_with_horizontal():
    # single cosine along x -> only X[u=1, v=0] (plus DC) is nonzero
    n = 8
    x = np.arange(n)
    wave = 100.0 + 50.0 * np.cos(np.pi * (2 * x + 1) / (2 * n))
    g = GrayImage(np.tile(wave, (n, 1)))
    coeffs = dct2(g).coeffs
    strong = {(u, v) for u in range(n) for v in range(n)
              if abs(coeffs[u, v]) > 1e-6}
    assert strong == {(0, 0), (1, 0)}


def test_dct2_matches_direct_sum_oracle():
    stream = Stream(17)
    for n in (2, 4, 8, 32):
        block = stream.uniform_block(n * n, 0.0, 255.0).reshape(n, n)
        ours = dct2(GrayImage(block)).coeffs
        reference = dct2_direct(block)
        assert np.abs(ours - reference).max() < 1e-9


def test_dct2_parseval_energy():
    stream = Stream(29)
    for n in (4, 8, 32):
        block = stream.uniform_block(n * n, 0.0, 255.0).reshape(n, n)
        coeffs = dct2(GrayImage(block)).coeffs
        energy_in = float(np.sum(block**2))
        energy_out = float(np.sum(coeffs**2))
        assert abs(energy_in - energy_out) / energy_in < 1e-6


def test_dct2_round_trip():
    stream = Stream(31)
    block = stream.uniform_block(32 * 32, 0.0, 255.0).reshape(32, 32)
    recovered = idct2(dct2(GrayImage(block)))
    assert np.abs(recovered - block).max() < 1e-9


def test_dct2_rejects_non_square():
    with pytest.raises(ValueError):
        dct2(GrayImage(np.zeros((4, 8))))


# ---------------------------------------------------------------------------
# type validation


def test_image_validation():
    with pytest.raises(ValueError):
        Image(np.zeros((0, 4, 3)))
    with pytest.raises(ValueError):
        Image(np.zeros((4, 4)))
    with pytest.raises(ValueError):
        Image(np.full((2, 2, 3), 300))


def test_gray_image_validation():
    with pytest.raises(ValueError):
        GrayImage(np.full((2, 2), 256.0))
    with pytest.raises(ValueError):
        GrayImage(np.array([[np.nan, 0.0]]))
