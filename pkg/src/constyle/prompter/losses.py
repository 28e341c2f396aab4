"""Pre-training losses.

Each function returns ``(value, grad)`` where ``grad`` is taken w.r.t. the
student-side argument only; teacher/key arguments are treated as constants.
Batched inputs are averaged over the leading axis.
"""

from __future__ import annotations

import numpy as np

NORM_TOL = 1e-3


def _batch(x):
    x = np.asarray(x, dtype=np.float64) if not isinstance(x, np.ndarray) else x
    return (x[None, :], True) if x.ndim == 1 else (x, False)


def log_softmax(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def softmax(z, axis=-1):
    return np.exp(log_softmax(z, axis))


def _check_unit(x, name):
    norms = np.sqrt((x * x).sum(axis=-1))
    if np.any(np.abs(norms - 1.0) > NORM_TOL):
        raise ValueError(f"{name} must be L2-normalized (norms {norms.min():.6g}..{norms.max():.6g})")


def info_nce(q, k_pos, negatives, temperature: float):
    """``-log(exp(q.k+/t) / (exp(q.k+/t) + sum_i exp(q.k_i/t)))``.

    ``negatives`` is an (N, d) array or a :class:`NegativeQueue`.
    """
    if hasattr(negatives, "keys"):
        negatives = negatives.keys()
    negatives = np.asarray(negatives)
    if negatives.ndim != 2 or negatives.shape[0] == 0:
        raise ValueError("negative queue is empty")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    qb, single = _batch(q)
    kb, _ = _batch(k_pos)
    _check_unit(qb, "q")
    _check_unit(kb, "k_pos")
    n = qb.shape[0]
    pos = (qb * kb).sum(axis=1, keepdims=True)
    logits = np.concatenate([pos, qb @ negatives.T], axis=1) / temperature
    logp = log_softmax(logits)
    value = float(-logp[:, 0].mean())
    p = np.exp(logp)
    grad = (p[:, :1] * kb + p[:, 1:] @ negatives - kb) / (temperature * n)
    return value, (grad[0] if single else grad)


def _pairs(a_maps, b_maps):
    if isinstance(a_maps, np.ndarray):
        a_maps, b_maps = [a_maps], [b_maps]
    if len(a_maps) != len(b_maps):
        raise ValueError("feature map lists differ in length")
    return list(a_maps), list(b_maps)


def content_loss(f_student, f_teacher):
    """Mean absolute difference per map, averaged over maps."""
    fs, ft = _pairs(f_student, f_teacher)
    value, grads = 0.0, []
    for a, b in zip(fs, ft):
        if a.shape != b.shape:
            raise ValueError(f"feature shape mismatch {a.shape} vs {b.shape}")
        d = a - b
        value += float(np.abs(d).mean())
        grads.append(np.sign(d) / (d.size * len(fs)))
    return value / len(fs), grads


def style_loss(f_a, f_b, eps: float = 1e-5):
    """Squared distance of per-channel mean and std, summed over channels and
    maps, averaged over the batch. Maps are (B, C, H, W)."""
    fa, fb = _pairs(f_a, f_b)
    value, grads = 0.0, []
    for a, b in zip(fa, fb):
        if a.shape[:2] != b.shape[:2]:
            raise ValueError(f"channel mismatch {a.shape} vs {b.shape}")
        nb = a.shape[0]
        hw = a.shape[2] * a.shape[3]
        mu_a = a.mean(axis=(2, 3), keepdims=True)
        mu_b = b.mean(axis=(2, 3), keepdims=True)
        sd_a = np.sqrt(a.var(axis=(2, 3), keepdims=True) + eps)
        sd_b = np.sqrt(b.var(axis=(2, 3), keepdims=True) + eps)
        value += float((((mu_a - mu_b) ** 2).sum() + ((sd_a - sd_b) ** 2).sum()) / nb)
        g = 2 * (mu_a - mu_b) / hw + 2 * (sd_a - sd_b) * (a - mu_a) / (hw * sd_a)
        grads.append(g / nb)
    return value, grads


def cross_entropy(logits, labels):
    zb, single = _batch(logits)
    labels = np.atleast_1d(np.asarray(labels))
    k = zb.shape[1]
    if labels.shape[0] != zb.shape[0]:
        raise ValueError("label count does not match batch")
    if np.any(labels < 0) or np.any(labels >= k):
        raise ValueError(f"label out of range for {k} classes")
    logp = log_softmax(zb)
    rows = np.arange(zb.shape[0])
    value = float(-logp[rows, labels].mean())
    grad = np.exp(logp)
    grad[rows, labels] -= 1.0
    grad /= zb.shape[0]
    return value, (grad[0] if single else grad)


def kl_distill(teacher_logits, student_logits, temperature: float = 1.0):
    """``KL(softmax(t/T) || softmax(s/T))``; gradient w.r.t. the student logits."""
    tb, _ = _batch(teacher_logits)
    sb, single = _batch(student_logits)
    if tb.shape != sb.shape:
        raise ValueError(f"logit shape mismatch {tb.shape} vs {sb.shape}")
    log_p = log_softmax(tb / temperature)
    log_q = log_softmax(sb / temperature)
    p = np.exp(log_p)
    value = float((p * (log_p - log_q)).sum(axis=1).mean())
    grad = (np.exp(log_q) - p) / (temperature * sb.shape[0])
    return value, (grad[0] if single else grad)
