"""Pixel buffers and the low-level image operations everything else builds on.

Images are numpy arrays of shape ``(H, W, C)`` with ``C`` in ``{1, 3}`` and
float64 samples in ``[0, 1]``.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from . import kernels
from .errors import DataError, ImageFormatError

_RGB_TO_YCBCR = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168735892, -0.331264108, 0.5],
        [0.5, -0.418687589, -0.081312411],
    ]
)
_YCBCR_TO_RGB = np.linalg.inv(_RGB_TO_YCBCR)
_CHROMA_OFFSET = np.array([0.0, 0.5, 0.5])

LUMA_WEIGHTS = _RGB_TO_YCBCR[0]


def as_image(img) -> np.ndarray:
    """Validate and return ``img`` as a float64 ``(H, W, C)`` array."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise DataError(f"expected an (H, W, 1|3) image, got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise DataError("zero-dimension image")
    return arr


def load_image(path: str | os.PathLike) -> np.ndarray:
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("RGBA", "P", "CMYK", "YCbCr"):
                im = im.convert("RGB")
            elif im.mode == "LA" or im.mode == "1":
                im = im.convert("L")
            if im.mode not in ("L", "RGB"):
                raise ImageFormatError(f"{path}: unsupported pixel mode {im.mode}")
            arr = np.asarray(im, dtype=np.uint8)
    except FileNotFoundError:
        raise
    except UnidentifiedImageError as exc:
        raise ImageFormatError(f"{path}: unsupported or unrecognized format") from exc
    except (OSError, SyntaxError) as exc:
        raise ImageFormatError(f"{path}: unreadable image ({exc})") from exc
    if arr.size == 0:
        raise ImageFormatError(f"{path}: zero-dimension image")
    return as_image(arr.astype(np.float64) / 255.0)


def to_uint8(img) -> np.ndarray:
    arr = as_image(img)
    return np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_image(img, path: str | os.PathLike) -> None:
    """Write an 8-bit PNG (or any Pillow format picked from the suffix)."""
    data = to_uint8(img)
    if data.shape[2] == 1:
        im = Image.fromarray(data[:, :, 0], mode="L")
    else:
        im = Image.fromarray(data, mode="RGB")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    im.save(path)


def quantize8(img) -> np.ndarray:
    """Snap samples to the 8-bit grid, as a save/load round trip would."""
    return to_uint8(img).astype(np.float64) / 255.0


def convolve2d(img, kernel, padding: str = "reflect") -> np.ndarray:
    if padding != "reflect":
        raise ValueError(f"unsupported padding {padding!r}")
    arr = as_image(img)
    k = np.asarray(kernel, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1] or k.shape[0] % 2 == 0:
        raise ValueError(f"kernel must be square with odd size, got {k.shape}")
    if k.shape[0] > min(arr.shape[:2]):
        raise ValueError(f"kernel size {k.shape[0]} exceeds image size {arr.shape[:2]}")
    return kernels.convolve2d_reflect(np.ascontiguousarray(arr), k)


def _require_rgb(arr):
    if arr.shape[2] != 3:
        raise DataError(f"expected 3 channels, got {arr.shape[2]}")


def rgb_to_ycbcr(img) -> np.ndarray:
    """Full-range BT.601 with chroma centered on 0.5."""
    arr = as_image(img)
    _require_rgb(arr)
    return arr @ _RGB_TO_YCBCR.T + _CHROMA_OFFSET


def ycbcr_to_rgb(img) -> np.ndarray:
    arr = as_image(img)
    _require_rgb(arr)
    return (arr - _CHROMA_OFFSET) @ _YCBCR_TO_RGB.T


def luminance(img) -> np.ndarray:
    """BT.601 luma as an (H, W) array; gray inputs pass through."""
    arr = as_image(img)
    if arr.shape[2] == 1:
        return arr[:, :, 0]
    return arr @ LUMA_WEIGHTS


def _bilinear_axis(n_in, n_out):
    # half-pixel centers, edge-clamped
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    return lo, hi, frac


def resize_bilinear(img, out_h: int, out_w: int) -> np.ndarray:
    arr = as_image(img)
    if out_h < 1 or out_w < 1:
        raise ValueError(f"target size must be positive, got {out_h}x{out_w}")
    h, w = arr.shape[:2]
    if (out_h, out_w) == (h, w):
        return arr.copy()
    y0, y1, fy = _bilinear_axis(h, out_h)
    x0, x1, fx = _bilinear_axis(w, out_w)
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    top = arr[y0][:, x0] * (1 - fx) + arr[y0][:, x1] * fx
    bot = arr[y1][:, x0] * (1 - fx) + arr[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def crop(img, x: int, y: int, w: int, h: int) -> np.ndarray:
    arr = as_image(img)
    height, width = arr.shape[:2]
    if x < 0 or y < 0 or w < 1 or h < 1 or x + w > width or y + h > height:
        raise DataError(f"crop ({x}, {y}, {w}, {h}) out of bounds for {width}x{height} image")
    return arr[y : y + h, x : x + w].copy()
