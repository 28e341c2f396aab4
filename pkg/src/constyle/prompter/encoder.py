"""The prompter encoder: conv-BN-ReLU stages, global pooling, a linear
projector to the latent code, and a classifier head used only in pre-training."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import DataError
from . import tape as T


@dataclass
class EncoderConfig:
    input_size: int = 32
    in_channels: int = 3
    stages: list[tuple[int, int]] = field(default_factory=lambda: [(16, 2), (32, 2), (64, 2), (128, 2)])
    latent_dim: int = 128
    num_classes: int = 10
    use_batchnorm: bool = True
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def __post_init__(self):
        self.stages = [tuple(s) for s in self.stages]
        if self.latent_dim < 2 or self.num_classes < 2 or not self.stages:
            raise ValueError("need latent_dim >= 2, num_classes >= 2 and at least one stage")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stages"] = [list(s) for s in self.stages]
        return d

    @classmethod
    def from_dict(cls, data: dict) -> EncoderConfig:
        return cls(**data)


@dataclass
class EncoderState:
    params: dict[str, np.ndarray]
    buffers: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> EncoderState:
        return EncoderState({k: v.copy() for k, v in self.params.items()},
                            {k: v.copy() for k, v in self.buffers.items()})

    def arrays(self) -> dict[str, np.ndarray]:
        return {**self.params, **self.buffers}

    def num_parameters(self) -> int:
        return sum(v.size for v in self.arrays().values())


@dataclass
class PromptBundle:
    latent_code: np.ndarray
    feature_maps: list[np.ndarray]
    class_logits: np.ndarray | None


def init_state(config: EncoderConfig, seed: int = 0, dtype=np.float32) -> EncoderState:
    rng = np.random.default_rng(seed)
    params, buffers = {}, {}
    cin = config.in_channels
    for i, (cout, _) in enumerate(config.stages):
        fan_in = cin * 9
        params[f"stage{i}.conv.weight"] = rng.normal(0.0, np.sqrt(2.0 / fan_in), (cout, cin, 3, 3))
        params[f"stage{i}.conv.bias"] = np.zeros(cout)
        if config.use_batchnorm:
            params[f"stage{i}.bn.weight"] = np.ones(cout)
            params[f"stage{i}.bn.bias"] = np.zeros(cout)
            buffers[f"stage{i}.bn.running_mean"] = np.zeros(cout)
            buffers[f"stage{i}.bn.running_var"] = np.ones(cout)
        cin = cout
    bound = 1.0 / np.sqrt(cin)
    params["projector.weight"] = rng.uniform(-bound, bound, (config.latent_dim, cin))
    params["projector.bias"] = np.zeros(config.latent_dim)
    params["classifier.weight"] = rng.uniform(-bound, bound, (config.num_classes, cin))
    params["classifier.bias"] = np.zeros(config.num_classes)
    cast = lambda d: {k: v.astype(dtype) for k, v in d.items()}  # noqa: E731
    return EncoderState(cast(params), cast(buffers))


def to_nchw(images, config: EncoderConfig, dtype) -> np.ndarray:
    x = np.asarray(images)
    if x.ndim == 3:
        x = x[None]
    expected = (config.input_size, config.input_size, config.in_channels)
    if x.ndim != 4 or x.shape[1:] != expected:
        raise DataError(f"expected images of shape (B, {expected[0]}, {expected[1]}, {expected[2]}), got {x.shape}")
    return np.ascontiguousarray(x.transpose(0, 3, 1, 2), dtype=dtype)


def forward(state: EncoderState, config: EncoderConfig, x: np.ndarray, train: bool = False, tape=None,
            with_classifier: bool = True):
    """Run the network on an NCHW batch.

    Returns ``(latent, feature_maps, logits, param_vars, new_buffers)`` where the
    first three are :class:`~.tape.Var` (logits may be None) and
    ``new_buffers`` holds updated BN running statistics in train mode.
    """
    grad = tape is not None
    pv = {k: T.Var(v, requires_grad=grad) for k, v in state.params.items()}
    h = T.Var(x)
    feats = []
    new_buffers = dict(state.buffers)
    mom = config.bn_momentum
    for i, (_, stride) in enumerate(config.stages):
        h = T.conv2d(tape, h, pv[f"stage{i}.conv.weight"], pv[f"stage{i}.conv.bias"], stride=stride, pad=1)
        if config.use_batchnorm:
            g, b = pv[f"stage{i}.bn.weight"], pv[f"stage{i}.bn.bias"]
            rm_key, rv_key = f"stage{i}.bn.running_mean", f"stage{i}.bn.running_var"
            if train:
                h, mean, var = T.batchnorm_train(tape, h, g, b, config.bn_eps)
                new_buffers[rm_key] = ((1 - mom) * state.buffers[rm_key] + mom * mean).astype(x.dtype)
                new_buffers[rv_key] = ((1 - mom) * state.buffers[rv_key] + mom * var).astype(x.dtype)
            else:
                h = T.batchnorm_eval(tape, h, g, b, state.buffers[rm_key], state.buffers[rv_key], config.bn_eps)
        h = T.relu(tape, h)
        feats.append(h)
    pooled = T.global_avg_pool(tape, h)
    latent = T.l2_normalize(tape, T.linear(tape, pooled, pv["projector.weight"], pv["projector.bias"]))
    logits = None
    if with_classifier and "classifier.weight" in pv:
        logits = T.linear(tape, pooled, pv["classifier.weight"], pv["classifier.bias"])
    return latent, feats, logits, pv, new_buffers


def encoder_forward(state: EncoderState, config: EncoderConfig, img) -> PromptBundle:
    """Eval-mode prompt extraction for one (H, W, C) image or a (B, H, W, C) batch."""
    dtype = next(iter(state.params.values())).dtype
    x = to_nchw(img, config, dtype)
    latent, feats, logits, _, _ = forward(state, config, x, train=False)
    return PromptBundle(
        latent_code=latent.value,
        feature_maps=[f.value for f in feats],
        class_logits=None if logits is None else logits.value,
    )
