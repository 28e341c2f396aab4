"""Pure-numpy reference implementations of the hot kernels.

Accumulation order matches ``_ckernels`` tap by tap, so both backends give
bit-identical results on IEEE hardware without fused multiply-add.
"""

import numpy as np


def convolve2d_reflect(img, kernel):
    """True 2-D convolution of an (H, W, C) image with reflect borders."""
    size = kernel.shape[0]
    r = size // 2
    h, w = img.shape[:2]
    padded = np.pad(img, ((r, r), (r, r), (0, 0)), mode="reflect")
    flipped = kernel[::-1, ::-1]
    out = np.zeros_like(img)
    for i in range(size):
        for j in range(size):
            wt = flipped[i, j]
            if wt != 0.0:
                out += wt * padded[i : i + h, j : j + w]
    return out


def im2col(x, ksize, stride, pad):
    b, c, h, w = x.shape
    ho = (h + 2 * pad - ksize) // stride + 1
    wo = (w + 2 * pad - ksize) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((b, c, ksize, ksize, ho, wo), dtype=x.dtype)
    for i in range(ksize):
        for j in range(ksize):
            cols[:, :, i, j] = xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
    return cols.reshape(b, c * ksize * ksize, ho * wo)


def col2im(cols, shape, ksize, stride, pad):
    b, c, h, w = shape
    ho = (h + 2 * pad - ksize) // stride + 1
    wo = (w + 2 * pad - ksize) // stride + 1
    cols = cols.reshape(b, c, ksize, ksize, ho, wo)
    xp = np.zeros((b, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(ksize):
        for j in range(ksize):
            xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += cols[:, :, i, j]
    return xp[:, :, pad : pad + h, pad : pad + w].copy()
