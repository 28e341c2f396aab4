"""AdamW with decoupled weight decay, and the cosine learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def cosine_lr(t: float, config) -> float:
    total = config.total_iters
    if not 0 <= t <= total:
        raise ValueError(f"iteration {t} outside [0, {total}]")
    return config.lr_min + 0.5 * (config.lr_max - config.lr_min) * (1.0 + math.cos(math.pi * t / total))


def adamw_step(params: dict, grads: dict, opt: AdamState, t: int, config, lr: float | None = None):
    """One AdamW update at 1-based step ``t``; returns new ``(params, opt)``.

    Decay is applied to the weights directly (``p -= lr * wd * p``) and kept
    out of the moment estimates.
    """
    if t < 1:
        raise ValueError("t is 1-based")
    lr = config.lr_max if lr is None else lr
    b1, b2, eps, wd = config.beta1, config.beta2, config.eps, config.weight_decay
    new_params, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape:
            raise ValueError(f"{name}: grad shape {g.shape} != param shape {p.shape}")
        m = opt.m.get(name, np.zeros_like(p))
        v = opt.v.get(name, np.zeros_like(p))
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        q = p - lr * wd * p
        q = q - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_params[name] = q.astype(p.dtype, copy=False)
        new_m[name] = m.astype(p.dtype, copy=False)
        new_v[name] = v.astype(p.dtype, copy=False)
    return new_params, AdamState(new_m, new_v)
