"""Pre-training: student on degraded images, EMA teacher on clean images,
InfoNCE against a negative queue, content, cross-entropy and KL distillation."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ..degrade.pipeline import PolicyConfig, batch_policy
from ..errors import ConfigError, NumericalError
from ..rng import child_seed
from . import losses
from . import tape as T
from .encoder import EncoderConfig, EncoderState, forward, init_state, to_nchw
from .optim import AdamState, adamw_step, cosine_lr
from .queue import NegativeQueue
from .weights import save_tensors

log = logging.getLogger(__name__)

LOG_FIELDS = ("iter", "lr", "loss_total", "loss_infonce", "loss_content", "loss_ce", "loss_kl",
              "loss_style", "pos_neg_gap")


@dataclass
class TrainConfig:
    lr_max: float = 3e-4
    lr_min: float = 0.0
    total_iters: int = 200_000
    batch_size: int = 32
    momentum: float = 0.999
    temperature: float = 0.07
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    queue_size: int = 1024
    kl_temperature: float = 1.0
    nonfinite_patience: int = 3
    checkpoint_every: int = 0

    def __post_init__(self):
        if not 0.0 <= self.momentum <= 1.0:
            raise ConfigError("momentum must lie in [0, 1]")
        if self.temperature <= 0 or self.kl_temperature <= 0:
            raise ConfigError("temperatures must be positive")
        if self.total_iters < 1 or self.batch_size < 1 or self.queue_size < 1:
            raise ConfigError("total_iters, batch_size and queue_size must be positive")


@dataclass
class LossWeights:
    infonce: float = 1.0
    content: float = 1.0
    ce: float = 1.0
    kl: float = 1.0
    style: float = 0.0

    def __post_init__(self):
        if any(getattr(self, f.name) < 0 for f in fields(self)):
            raise ConfigError("loss weights must be non-negative")


class NonFiniteLoss(NumericalError):
    def __init__(self, breakdown: dict):
        super().__init__(f"non-finite loss: {breakdown}")
        self.breakdown = breakdown


class TrainingAborted(NumericalError):
    pass


@dataclass
class TrainerState:
    student: EncoderState
    teacher: EncoderState
    queue: NegativeQueue
    opt: AdamState = field(default_factory=AdamState)
    step: int = 0


def momentum_update(teacher: EncoderState, student: EncoderState, m: float) -> EncoderState:
    """``teacher <- m * teacher + (1 - m) * student`` for every parameter and buffer."""
    if teacher.params.keys() != student.params.keys() or teacher.buffers.keys() != student.buffers.keys():
        raise ValueError("teacher and student have different layers")

    def blend(t, s):
        out = {}
        for k in t:
            if t[k].shape != s[k].shape:
                raise ValueError(f"{k}: shape {t[k].shape} vs {s[k].shape}")
            out[k] = m * t[k] + (1 - m) * s[k]
        return out

    return EncoderState(blend(teacher.params, student.params), blend(teacher.buffers, student.buffers))


def init_trainer(enc_config: EncoderConfig, config: TrainConfig, seed: int) -> TrainerState:
    student = init_state(enc_config, seed=child_seed(seed, 1))
    queue = NegativeQueue.random(config.queue_size, enc_config.latent_dim, np.random.default_rng(child_seed(seed, 2)))
    return TrainerState(student=student, teacher=student.copy(), queue=queue)


def pretrain_step(state: TrainerState, images, labels, weights: LossWeights, config: TrainConfig,
                  enc_config: EncoderConfig, seed: int, policy: PolicyConfig | None = None,
                  degrade: bool = True, threads: int = 1) -> tuple[dict, TrainerState]:
    """One optimization step at iteration ``state.step``; returns (breakdown, new state).

    The queue is updated in place. Raises :class:`NonFiniteLoss` (leaving the
    state untouched) when any loss term is not finite.
    """
    t = state.step
    lr = cosine_lr(min(t, config.total_iters), config)
    clean = np.asarray(images, dtype=np.float64)
    if clean.ndim == 3:
        clean = clean[None]
    labels = np.atleast_1d(np.asarray(labels))
    if degrade:
        items = batch_policy(list(clean), child_seed(seed, t), policy, threads=threads)
        degraded = np.stack([im for im, _, _ in items])
    else:
        degraded = clean

    dtype = next(iter(state.student.params.values())).dtype
    tape = T.Tape()
    q, feats_s, logits_s, pv, new_buffers = forward(
        state.student, enc_config, to_nchw(degraded, enc_config, dtype), train=True, tape=tape
    )
    k, feats_t, logits_t, _, _ = forward(state.teacher, enc_config, to_nchw(clean, enc_config, dtype), train=False)
    k_val = k.value.astype(np.float64)
    negs = state.queue.keys().astype(np.float64)
    q64 = q.value.astype(np.float64)
    ft_vals = [f.value.astype(np.float64) for f in feats_t]
    fs_vals = [f.value.astype(np.float64) for f in feats_s]

    v_nce, g_nce = losses.info_nce(q64, k_val, negs, config.temperature)
    v_con, g_con = losses.content_loss(fs_vals, ft_vals)
    v_ce, g_ce = losses.cross_entropy(logits_s.value.astype(np.float64), labels)
    v_kl, g_kl = losses.kl_distill(logits_t.value.astype(np.float64), logits_s.value.astype(np.float64),
                                   config.kl_temperature)
    if weights.style > 0:
        v_sty, g_sty = losses.style_loss(fs_vals, ft_vals)
    else:
        v_sty, g_sty = 0.0, None

    w = [weights.infonce, weights.content, weights.ce, weights.kl, weights.style]
    total = w[0] * v_nce + w[1] * v_con + w[2] * v_ce + w[3] * v_kl + w[4] * v_sty
    pos = float((q64 * k_val).sum(axis=1).mean())
    neg = float((q64 @ negs.T).mean())
    breakdown = {
        "iter": t + 1,
        "lr": lr,
        "loss_total": total,
        "loss_infonce": v_nce,
        "loss_content": v_con,
        "loss_ce": v_ce,
        "loss_kl": v_kl,
        "loss_style": v_sty,
        "pos_neg_gap": pos - neg,
    }
    if not all(np.isfinite(breakdown[f]) for f in LOG_FIELDS):
        raise NonFiniteLoss(breakdown)

    cast = lambda gs: [g.astype(dtype) for g in gs]  # noqa: E731
    terms = [
        T.scalar_loss(tape, [q], v_nce, cast([g_nce])),
        T.scalar_loss(tape, feats_s, v_con, cast(g_con)),
        T.scalar_loss(tape, [logits_s], v_ce, cast([g_ce])),
        T.scalar_loss(tape, [logits_s], v_kl, cast([g_kl])),
    ]
    tw = w[:4]
    if g_sty is not None:
        terms.append(T.scalar_loss(tape, feats_s, v_sty, cast(g_sty)))
        tw = w
    root = T.weighted_sum(tape, terms, [dtype.type(x) for x in tw])
    tape.backward(root, np.asarray(1.0, dtype=dtype))
    grads = {name: v.grad for name, v in pv.items() if v.grad is not None}

    params, opt = adamw_step(state.student.params, grads, state.opt, t + 1, config, lr=lr)
    student = EncoderState(params, new_buffers)
    teacher = momentum_update(state.teacher, student, config.momentum)
    state.queue.enqueue_many(k.value)
    return breakdown, TrainerState(student, teacher, state.queue, opt, t + 1)


def save_checkpoint(state: TrainerState, path) -> None:
    tensors = {f"student.{k}": v for k, v in state.student.arrays().items()}
    tensors.update({f"teacher.{k}": v for k, v in state.teacher.arrays().items()})
    tensors["queue.keys"] = state.queue.state()["keys"]
    save_tensors(path, tensors, {"kind": "checkpoint", "step": state.step, "queue_cursor": state.queue.cursor,
                                 "queue_size": len(state.queue)})


def pretrain_loop(dataset, enc_config: EncoderConfig, config: TrainConfig, weights: LossWeights, seed: int = 0,
                  policy: PolicyConfig | None = None, log_path=None, checkpoint_dir=None, threads: int = 1,
                  iters: int | None = None) -> tuple[TrainerState, list[dict]]:
    """Run ``iters`` (default ``config.total_iters``) steps under the cosine schedule."""
    state = init_trainer(enc_config, config, seed)
    records: list[dict] = []
    streak = 0
    iters = config.total_iters if iters is None else iters
    fh = open(log_path, "w", encoding="utf-8", newline="\n") if log_path else None
    try:
        while state.step < iters:
            images, labels = dataset.batch(state.step, config.batch_size)
            try:
                rec, state = pretrain_step(state, images, labels, weights, config, enc_config, seed,
                                           policy=policy, threads=threads)
            except NonFiniteLoss as exc:
                streak += 1
                log.warning("iteration %d: %s", state.step + 1, exc)
                if streak > config.nonfinite_patience:
                    raise TrainingAborted(f"{streak} consecutive non-finite losses; last: {exc.breakdown}") from exc
                state.step += 1
                continue
            streak = 0
            records.append(rec)
            if fh:
                fh.write(json.dumps({f: rec[f] for f in LOG_FIELDS}) + "\n")
            if checkpoint_dir and config.checkpoint_every and state.step % config.checkpoint_every == 0:
                Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
                save_checkpoint(state, Path(checkpoint_dir) / f"step_{state.step:07d}.bin")
    finally:
        if fh:
            fh.close()
    return state, records


def classifier_accuracy(state: EncoderState, enc_config: EncoderConfig, images, labels) -> float:
    dtype = next(iter(state.params.values())).dtype
    _, _, logits, _, _ = forward(state, enc_config, to_nchw(images, enc_config, dtype), train=False)
    return float((logits.value.argmax(axis=1) == np.asarray(labels)).mean())


def similarity_gap(student: EncoderState, teacher: EncoderState, enc_config: EncoderConfig, degraded, clean) -> float:
    """Mean matched-pair cosine minus mean mismatched-pair cosine (student on
    degraded vs teacher on clean)."""
    dtype = next(iter(student.params.values())).dtype
    q = forward(student, enc_config, to_nchw(degraded, enc_config, dtype))[0].value.astype(np.float64)
    k = forward(teacher, enc_config, to_nchw(clean, enc_config, dtype))[0].value.astype(np.float64)
    sims = q @ k.T
    n = len(sims)
    off = (sims.sum() - np.trace(sims)) / (n * (n - 1))
    return float(np.trace(sims) / n - off)


def config_dict(enc_config: EncoderConfig, config: TrainConfig, weights: LossWeights) -> dict:
    return {"encoder": enc_config.to_dict(), "train": asdict(config), "weights": asdict(weights)}
