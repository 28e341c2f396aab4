"""Individual degradation operators.

Every operator is a pure function of its inputs; stochastic ones take a
``numpy.random.Generator``.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import DataError
from ..image import as_image, convolve2d, luminance, resize_bilinear
from .constants import CONTRAST_FACTORS, MOTION_BLUR_LENGTHS, SNOW_TABLE, SnowParams


def check_severity(severity: int) -> int:
    if isinstance(severity, bool) or int(severity) != severity or not 1 <= severity <= 5:
        raise ValueError(f"severity must be an integer in 1..5, got {severity!r}")
    return int(severity)


def gaussian_kernel(sigma_x: float, sigma_y: float, theta: float, size: int) -> np.ndarray:
    """Normalized anisotropic Gaussian; ``theta`` rotates the x axis counter-clockwise."""
    if sigma_x <= 0 or sigma_y <= 0:
        raise ValueError("sigmas must be positive")
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be odd, got {size}")
    rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    cov = rot @ np.diag([sigma_x**2, sigma_y**2]) @ rot.T
    inv = np.linalg.inv(cov)
    r = size // 2
    ax = np.arange(-r, r + 1, dtype=np.float64)
    xx, yy = np.meshgrid(ax, ax)
    pts = np.stack([xx, yy], axis=-1)
    k = np.exp(-0.5 * np.einsum("...i,ij,...j->...", pts, inv, pts))
    return k / k.sum()


def gaussian_blur(img, sigma_x: float, sigma_y: float, theta: float, size: int) -> np.ndarray:
    k = gaussian_kernel(sigma_x, sigma_y, theta, size)
    return np.clip(convolve2d(img, k), 0.0, 1.0)


def add_gaussian_noise(img, sigma: float, gray: bool, rng: np.random.Generator) -> np.ndarray:
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    arr = as_image(img)
    if sigma == 0:
        return arr.copy()
    h, w, c = arr.shape
    shape = (h, w, 1) if gray else (h, w, c)
    noise = rng.normal(0.0, sigma, size=shape)
    return np.clip(arr + noise, 0.0, 1.0)


def add_poisson_noise(img, scale: float, gray: bool, rng: np.random.Generator) -> np.ndarray:
    """Shot noise: ``Poisson(x * scale) / scale``; ``gray`` draws one plane from luma."""
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    arr = as_image(img)
    if gray and arr.shape[2] == 3:
        lum = np.clip(luminance(arr), 0.0, 1.0)
        noise = rng.poisson(lum * scale) / scale - lum
        return np.clip(arr + noise[:, :, None], 0.0, 1.0)
    return np.clip(rng.poisson(np.clip(arr, 0.0, 1.0) * scale) / scale, 0.0, 1.0)


def line_kernel(length: int, angle: float) -> np.ndarray:
    """Normalized line of ``length`` pixels through the center, ``angle`` radians
    counter-clockwise from the +x axis (image rows grow downward)."""
    if length < 1:
        raise ValueError("length must be positive")
    size = length if length % 2 == 1 else length + 1
    c = size // 2
    k = np.zeros((size, size))
    half = (length - 1) / 2.0
    ts = np.linspace(-half, half, 4 * length + 1)
    xs = np.rint(c + ts * math.cos(angle)).astype(int)
    ys = np.rint(c - ts * math.sin(angle)).astype(int)
    k[ys, xs] = 1.0
    return k / k.sum()


def _fit_kernel(k: np.ndarray, limit: int) -> np.ndarray:
    # keep the kernel no larger than the image; trims rows/cols evenly
    if k.shape[0] <= limit:
        return k
    size = limit if limit % 2 == 1 else limit - 1
    off = (k.shape[0] - size) // 2
    k = k[off : off + size, off : off + size]
    return k / k.sum()


def motion_blur(img, severity: int, angle: float | None = None, rng: np.random.Generator | None = None,
                length: int | None = None) -> np.ndarray:
    severity = check_severity(severity)
    arr = as_image(img)
    if angle is None:
        if rng is None:
            raise ValueError("either angle or rng is required")
        angle = float(rng.uniform(-math.pi / 4, math.pi / 4))
    if length is None:
        length = MOTION_BLUR_LENGTHS[severity - 1]
    k = _fit_kernel(line_kernel(length, angle), min(arr.shape[:2]))
    return np.clip(convolve2d(arr, k), 0.0, 1.0)


def _clipped_zoom(layer: np.ndarray, zoom: float) -> np.ndarray:
    h, w = layer.shape[:2]
    ch = max(1, int(math.ceil(h / zoom)))
    cw = max(1, int(math.ceil(w / zoom)))
    top = (h - ch) // 2
    left = (w - cw) // 2
    center = layer[top : top + ch, left : left + cw]
    return resize_bilinear(center, h, w)


def snow(img, severity: int, rng: np.random.Generator, params: SnowParams | None = None) -> np.ndarray:
    """Additive snow layer plus a luminance lift, in the ImageNet-C style."""
    arr = as_image(img)
    if arr.shape[2] != 3:
        raise DataError("snow requires a 3-channel image")
    p = params if params is not None else SNOW_TABLE[check_severity(severity) - 1]
    h, w = arr.shape[:2]
    layer = rng.normal(loc=p.loc, scale=p.scale, size=(h, w))
    angle = math.radians(float(rng.uniform(-135.0, -45.0)))
    layer = _clipped_zoom(layer[:, :, None], p.zoom)
    layer[layer < p.threshold] = 0.0
    layer = np.clip(layer, 0.0, 1.0)
    k = _fit_kernel(line_kernel(p.blur_length, angle), min(h, w))
    layer = convolve2d(layer, k)
    lifted = np.maximum(arr, luminance(arr)[:, :, None] * 1.5 + 0.5)
    out = p.blend * arr + (1.0 - p.blend) * lifted
    return np.clip(out + layer + layer[::-1, ::-1], 0.0, 1.0)


def contrast(img, severity: int, factor: float | None = None) -> np.ndarray:
    """Pull every channel toward its mean: ``(x - mu) * c + mu``."""
    arr = as_image(img)
    c = CONTRAST_FACTORS[check_severity(severity) - 1] if factor is None else float(factor)
    mu = arr.mean(axis=(0, 1), keepdims=True)
    return np.clip((arr - mu) * c + mu, 0.0, 1.0)
