"""Baseline-JPEG quantization cycle without entropy coding.

Only the lossy steps are modeled: 8-bit input, BT.601 color conversion,
optional 4:2:0 chroma subsampling, 8x8 DCT, quantization with the standard
Annex K tables scaled by the IJG quality rule, and the inverse path back to
8-bit RGB.
"""

import numpy as np

from ..image import as_image, quantize8, rgb_to_ycbcr, ycbcr_to_rgb

LUMA_TABLE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)

CHROMA_TABLE = np.array(
    [
        [17, 18, 24, 47, 99, 99, 99, 99],
        [18, 21, 26, 66, 99, 99, 99, 99],
        [24, 26, 56, 99, 99, 99, 99, 99],
        [47, 66, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
    ],
    dtype=np.float64,
)


def _dct_matrix(n=8):
    k = np.arange(n)[:, None]
    x = np.arange(n)[None, :]
    m = np.cos((2 * x + 1) * k * np.pi / (2 * n)) * np.sqrt(2.0 / n)
    m[0] /= np.sqrt(2.0)
    return m


DCT8 = _dct_matrix()


def scaled_table(table, quality: int) -> np.ndarray:
    """IJG ``jpeg_quality_scaling`` applied to a base table, clamped to [1, 255]."""
    if not 1 <= quality <= 100:
        raise ValueError(f"quality must be in 1..100, got {quality}")
    scale = 5000 // quality if quality < 50 else 200 - 2 * quality
    return np.clip(np.floor((table * scale + 50) / 100), 1, 255)


def _blocks(plane):
    h, w = plane.shape
    return plane.reshape(h // 8, 8, w // 8, 8).transpose(0, 2, 1, 3)


def _unblocks(blocks):
    nh, nw = blocks.shape[:2]
    return blocks.transpose(0, 2, 1, 3).reshape(nh * 8, nw * 8)


def quantize_plane(plane, table):
    """DCT, quantize, dequantize, inverse DCT for a plane on the 0..255 scale."""
    blocks = _blocks(plane - 128.0)
    coef = DCT8 @ blocks @ DCT8.T
    coef = np.round(coef / table) * table
    return _unblocks(DCT8.T @ coef @ DCT8) + 128.0


def _pad_to(plane, mult):
    h, w = plane.shape
    ph = (-h) % mult
    pw = (-w) % mult
    if ph or pw:
        plane = np.pad(plane, ((0, ph), (0, pw)), mode="edge")
    return plane


def jpeg_roundtrip(img, quality: int, chroma_subsample: bool = True) -> np.ndarray:
    arr = quantize8(as_image(img))
    luma_q = scaled_table(LUMA_TABLE, quality)
    chroma_q = scaled_table(CHROMA_TABLE, quality)
    h, w, c = arr.shape
    if c == 1:
        y = _pad_to(arr[:, :, 0] * 255.0, 8)
        out = quantize_plane(y, luma_q)[:h, :w, None]
        return quantize8(np.clip(out / 255.0, 0.0, 1.0))

    ycc = rgb_to_ycbcr(arr) * 255.0
    mult = 16 if chroma_subsample else 8
    planes = [_pad_to(ycc[:, :, i], mult) for i in range(3)]
    ph, pw = planes[0].shape
    out = np.empty((ph, pw, 3))
    out[:, :, 0] = quantize_plane(planes[0], luma_q)
    for i in (1, 2):
        p = planes[i]
        if chroma_subsample:
            small = p.reshape(ph // 2, 2, pw // 2, 2).mean(axis=(1, 3))
            small = quantize_plane(small, chroma_q)
            out[:, :, i] = np.repeat(np.repeat(small, 2, axis=0), 2, axis=1)
        else:
            out[:, :, i] = quantize_plane(p, chroma_q)
    rgb = ycbcr_to_rgb(out[:h, :w] / 255.0)
    return quantize8(np.clip(rgb, 0.0, 1.0))
