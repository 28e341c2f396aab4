# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Signatures mirror ``_pykernels``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

ctypedef fused real:
    float
    double


def convolve2d_reflect(img, kernel):
    cdef Py_ssize_t size = kernel.shape[0], r = size // 2
    img = np.asarray(img, dtype=np.float64)
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1], nc = img.shape[2]
    cdef double[:, ::1] pad = np.ascontiguousarray(
        np.pad(img, ((r, r), (r, r), (0, 0)), mode="reflect").reshape(h + 2 * r, (w + 2 * r) * nc)
    )
    cdef double[:, ::1] k = np.ascontiguousarray(kernel[::-1, ::-1], dtype=np.float64)
    out_arr = np.zeros((h, w * nc), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t y, x, i, j, off, row_len = w * nc
    cdef double wt
    cdef double* o
    cdef double* p
    with nogil:
        for i in range(size):
            for j in range(size):
                wt = k[i, j]
                if wt == 0.0:
                    continue
                off = j * nc
                for y in range(h):
                    o = &out[y, 0]
                    p = &pad[y + i, off]
                    for x in range(row_len):
                        o[x] = o[x] + wt * p[x]
    return out_arr.reshape(h, w, nc)


def _im2col(real[:, :, :, ::1] x, real[:, :, ::1] cols, Py_ssize_t ksize,
            Py_ssize_t stride, Py_ssize_t pad, Py_ssize_t ho, Py_ssize_t wo):
    cdef Py_ssize_t b, c, i, j, oy, ox, iy, ix, row
    cdef Py_ssize_t nb = x.shape[0], nc = x.shape[1], h = x.shape[2], w = x.shape[3]
    with nogil:
        for b in range(nb):
            for c in range(nc):
                for i in range(ksize):
                    for j in range(ksize):
                        row = (c * ksize + i) * ksize + j
                        for oy in range(ho):
                            iy = oy * stride + i - pad
                            for ox in range(wo):
                                ix = ox * stride + j - pad
                                if 0 <= iy < h and 0 <= ix < w:
                                    cols[b, row, oy * wo + ox] = x[b, c, iy, ix]
                                else:
                                    cols[b, row, oy * wo + ox] = 0


def _col2im(real[:, :, ::1] cols, real[:, :, :, ::1] x, Py_ssize_t ksize,
            Py_ssize_t stride, Py_ssize_t pad, Py_ssize_t ho, Py_ssize_t wo):
    cdef Py_ssize_t b, c, i, j, oy, ox, iy, ix, row
    cdef Py_ssize_t nb = x.shape[0], nc = x.shape[1], h = x.shape[2], w = x.shape[3]
    with nogil:
        for b in range(nb):
            for c in range(nc):
                for i in range(ksize):
                    for j in range(ksize):
                        row = (c * ksize + i) * ksize + j
                        for oy in range(ho):
                            iy = oy * stride + i - pad
                            if iy < 0 or iy >= h:
                                continue
                            for ox in range(wo):
                                ix = ox * stride + j - pad
                                if 0 <= ix < w:
                                    x[b, c, iy, ix] += cols[b, row, oy * wo + ox]


def im2col(x, ksize, stride, pad):
    x = np.ascontiguousarray(x)
    nb, nc, h, w = x.shape
    ho = (h + 2 * pad - ksize) // stride + 1
    wo = (w + 2 * pad - ksize) // stride + 1
    cols = np.empty((nb, nc * ksize * ksize, ho * wo), dtype=x.dtype)
    _im2col(x, cols, ksize, stride, pad, ho, wo)
    return cols


def col2im(cols, shape, ksize, stride, pad):
    nb, nc, h, w = shape
    ho = (h + 2 * pad - ksize) // stride + 1
    wo = (w + 2 * pad - ksize) // stride + 1
    cols = np.ascontiguousarray(cols)
    x = np.zeros((nb, nc, h, w), dtype=cols.dtype)
    _col2im(cols, x, ksize, stride, pad, ho, wo)
    return x
