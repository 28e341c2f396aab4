"""Minimal reverse-mode differentiation over dense numpy arrays.

Each op computes its forward value with numpy and, when a :class:`Tape` is
active and any input requires a gradient, records a vector-Jacobian product.
:meth:`Tape.backward` replays the records in reverse. Arrays use NCHW layout.
"""

from __future__ import annotations

import numpy as np

from .. import kernels


class Var:
    __slots__ = ("value", "grad", "requires_grad")

    def __init__(self, value, requires_grad: bool = False):
        self.value = value
        self.grad = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(shape={self.value.shape}, requires_grad={self.requires_grad})"


class Tape:
    def __init__(self):
        self._records: list[tuple[Var, tuple[Var, ...], object]] = []

    def record(self, out: Var, inputs, vjp) -> None:
        self._records.append((out, tuple(inputs), vjp))

    def backward(self, root: Var, grad=None) -> None:
        root.grad = np.ones_like(root.value) if grad is None else grad
        for out, inputs, vjp in reversed(self._records):
            if out.grad is None:
                continue
            for v, g in zip(inputs, vjp(out.grad)):
                if g is None or not v.requires_grad:
                    continue
                v.grad = g if v.grad is None else v.grad + g


def _emit(tape, value, inputs, vjp) -> Var:
    out = Var(value, requires_grad=any(v.requires_grad for v in inputs))
    if tape is not None and out.requires_grad:
        tape.record(out, inputs, vjp)
    return out


def conv2d(tape, x: Var, w: Var, b: Var, stride: int = 1, pad: int = 1) -> Var:
    """Cross-correlation with zero padding; ``w`` is (Cout, Cin, k, k)."""
    xv, wv = x.value, w.value
    n, _, h, wd = xv.shape
    cout, cin, k, _ = wv.shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    cols = kernels.im2col(xv, k, stride, pad)
    w2 = wv.reshape(cout, -1)
    out = (w2 @ cols + b.value[None, :, None]).reshape(n, cout, ho, wo)

    def vjp(g):
        g2 = g.reshape(n, cout, ho * wo)
        dw = np.einsum("bol,bkl->ok", g2, cols).reshape(wv.shape)
        db = g2.sum(axis=(0, 2))
        dx = None
        if x.requires_grad:
            dx = kernels.col2im(w2.T @ g2, xv.shape, k, stride, pad)
        return dx, dw, db

    return _emit(tape, out, (x, w, b), vjp)


def batchnorm_train(tape, x: Var, gamma: Var, beta: Var, eps: float = 1e-5):
    """Batch-statistics normalization. Returns the output plus (mean, unbiased var)."""
    xv = x.value
    axes = (0, 2, 3)
    m = xv.shape[0] * xv.shape[2] * xv.shape[3]
    mean = xv.mean(axis=axes)
    var = xv.var(axis=axes)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (xv - mean[None, :, None, None]) * inv_std[None, :, None, None]
    out = gamma.value[None, :, None, None] * xhat + beta.value[None, :, None, None]

    def vjp(g):
        dgamma = (g * xhat).sum(axis=axes)
        dbeta = g.sum(axis=axes)
        dxhat = g * gamma.value[None, :, None, None]
        dx = (inv_std[None, :, None, None] / m) * (
            m * dxhat
            - dxhat.sum(axis=axes)[None, :, None, None]
            - xhat * (dxhat * xhat).sum(axis=axes)[None, :, None, None]
        )
        return dx, dgamma, dbeta

    unbiased = var * (m / max(m - 1, 1))
    return _emit(tape, out, (x, gamma, beta), vjp), mean, unbiased


def batchnorm_eval(tape, x: Var, gamma: Var, beta: Var, running_mean, running_var, eps: float = 1e-5) -> Var:
    inv_std = 1.0 / np.sqrt(running_var + eps)
    scale = (gamma.value * inv_std)[None, :, None, None]
    xhat = (x.value - running_mean[None, :, None, None]) * inv_std[None, :, None, None]
    out = gamma.value[None, :, None, None] * xhat + beta.value[None, :, None, None]

    def vjp(g):
        return g * scale, (g * xhat).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))

    return _emit(tape, out, (x, gamma, beta), vjp)


def relu(tape, x: Var) -> Var:
    mask = x.value > 0
    return _emit(tape, x.value * mask, (x,), lambda g: (g * mask,))


def global_avg_pool(tape, x: Var) -> Var:
    n, c, h, w = x.value.shape
    out = x.value.mean(axis=(2, 3))

    def vjp(g):
        return (np.broadcast_to(g[:, :, None, None] / (h * w), x.value.shape).copy(),)

    return _emit(tape, out, (x,), vjp)


def linear(tape, x: Var, w: Var, b: Var) -> Var:
    """``x @ w.T + b`` with ``w`` of shape (out, in)."""
    out = x.value @ w.value.T + b.value

    def vjp(g):
        return g @ w.value, g.T @ x.value, g.sum(axis=0)

    return _emit(tape, out, (x, w, b), vjp)


def l2_normalize(tape, x: Var, eps: float = 1e-12) -> Var:
    norm = np.sqrt((x.value * x.value).sum(axis=1, keepdims=True))
    norm = np.maximum(norm, eps)
    y = x.value / norm

    def vjp(g):
        return ((g - y * (y * g).sum(axis=1, keepdims=True)) / norm,)

    return _emit(tape, y, (x,), vjp)


def scalar_loss(tape, inputs, value: float, grads) -> Var:
    """Wrap a loss whose gradients w.r.t. ``inputs`` are already known."""
    return _emit(tape, np.asarray(value), inputs, lambda g: tuple(g * gi for gi in grads))


def weighted_sum(tape, terms, weights) -> Var:
    value = sum(float(w) * float(t.value) for t, w in zip(terms, weights))
    return _emit(tape, np.asarray(value), terms, lambda g: tuple(g * w for w in weights))
