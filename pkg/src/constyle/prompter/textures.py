"""Procedural 10-class texture set that stands in for ImageNet at desk scale."""

from __future__ import annotations

import numpy as np

from ..rng import child_seed

CLASS_NAMES = (
    "horizontal_stripes",
    "vertical_stripes",
    "diagonal_stripes",
    "antidiagonal_stripes",
    "checkerboard",
    "rings",
    "dots",
    "blobs",
    "speckle",
    "disk",
)
NUM_CLASSES = len(CLASS_NAMES)


def _smooth_field(rng, size, cells):
    coarse = rng.random((cells, cells))
    idx = np.linspace(0, cells - 1, size)
    i0 = np.floor(idx).astype(int)
    i1 = np.minimum(i0 + 1, cells - 1)
    f = idx - i0
    rows = coarse[i0] * (1 - f)[:, None] + coarse[i1] * f[:, None]
    return rows[:, i0] * (1 - f)[None, :] + rows[:, i1] * f[None, :]


def render(label: int, rng: np.random.Generator, size: int = 32) -> np.ndarray:
    """One (size, size, 3) texture of class ``label`` with random period, phase and colors."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    period = rng.uniform(5.0, 9.0)
    phase = rng.uniform(0, 2 * np.pi)
    w = 2 * np.pi / period
    if label == 0:
        pattern = np.sin(w * yy + phase) > 0
    elif label == 1:
        pattern = np.sin(w * xx + phase) > 0
    elif label == 2:
        pattern = np.sin(w * (xx + yy) / np.sqrt(2) + phase) > 0
    elif label == 3:
        pattern = np.sin(w * (xx - yy) / np.sqrt(2) + phase) > 0
    elif label == 4:
        pattern = (np.sin(w * xx + phase) > 0) ^ (np.sin(w * yy + phase) > 0)
    elif label == 5:
        cy, cx = rng.uniform(0.3 * size, 0.7 * size, 2)
        pattern = np.sin(w * np.hypot(yy - cy, xx - cx) + phase) > 0
    elif label == 6:
        p = rng.uniform(7.0, 10.0)
        oy, ox = rng.uniform(0, p, 2)
        dy = (yy + oy) % p - p / 2
        dx = (xx + ox) % p - p / 2
        pattern = np.hypot(dy, dx) < p * 0.25
    elif label == 7:
        pattern = _smooth_field(rng, size, 4) > 0.5
    elif label == 8:
        pattern = rng.random((size, size)) > 0.5
    elif label == 9:
        cy, cx = rng.uniform(0.35 * size, 0.65 * size, 2)
        pattern = np.hypot(yy - cy, xx - cx) < rng.uniform(0.2, 0.35) * size
    else:
        raise ValueError(f"label must be in 0..{NUM_CLASSES - 1}")
    fg = rng.uniform(0.55, 1.0, 3)
    bg = rng.uniform(0.0, 0.45, 3)
    if rng.random() < 0.5:
        fg, bg = bg, fg
    img = np.where(pattern[:, :, None], fg, bg)
    return np.clip(img, 0.0, 1.0)


class ToyTextures:
    """Deterministic, index-addressable texture stream."""

    num_classes = NUM_CLASSES

    def __init__(self, seed: int = 0, size: int = 32):
        self.seed = seed
        self.size = size

    def item(self, index: int) -> tuple[np.ndarray, int]:
        rng = np.random.default_rng(child_seed(self.seed, index))
        label = int(rng.integers(0, NUM_CLASSES))
        return render(label, rng, self.size), label

    def batch(self, iteration: int, batch_size: int) -> tuple[np.ndarray, np.ndarray]:
        start = iteration * batch_size
        items = [self.item(start + i) for i in range(batch_size)]
        return np.stack([im for im, _ in items]), np.array([lb for _, lb in items])

    def take(self, n: int, offset: int = 0) -> tuple[np.ndarray, np.ndarray]:
        items = [self.item(offset + i) for i in range(n)]
        return np.stack([im for im, _ in items]), np.array([lb for _, lb in items])
