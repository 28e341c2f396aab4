"""Recipes, the two-stage blur/noise/JPEG chain, the weather branch and the
40/60 batch routing policy."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..errors import ConfigError
from ..image import as_image
from ..rng import SEED_BITS, child_seed, resolve
from . import ops
from .constants import TABLE_VERSION
from .jpeg import jpeg_roundtrip

WEATHER = "weather"
TWO_STAGE = "two_stage"


def _gaussian_noise(img, sigma, gray, seed):
    return ops.add_gaussian_noise(img, sigma, gray, np.random.default_rng(seed))


def _poisson_noise(img, scale, gray, seed):
    return ops.add_poisson_noise(img, scale, gray, np.random.default_rng(seed))


def _snow(img, severity, seed):
    return ops.snow(img, severity, np.random.default_rng(seed))


def _motion_blur(img, severity, angle, length=None):
    return ops.motion_blur(img, severity, angle=angle, length=length)


def _contrast(img, severity, factor=None):
    return ops.contrast(img, severity, factor=factor)


def _jpeg(img, quality, chroma_subsample=True):
    return jpeg_roundtrip(img, quality, chroma_subsample)


OPS = {
    "gaussian_blur": ops.gaussian_blur,
    "gaussian_noise": _gaussian_noise,
    "poisson_noise": _poisson_noise,
    "jpeg": _jpeg,
    "motion_blur": _motion_blur,
    "snow": _snow,
    "contrast": _contrast,
}


@dataclass
class Recipe:
    """Ordered, replayable log of degradation steps."""

    seed: int
    steps: list[dict] = field(default_factory=list)

    def add(self, op: str, **params) -> None:
        if op not in OPS:
            raise ValueError(f"unknown degradation op {op!r}")
        self.steps.append({"op": op, "params": params})

    def to_dict(self) -> dict:
        return {"seed": self.seed, "table_version": TABLE_VERSION, "steps": self.steps}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> Recipe:
        steps = list(data.get("steps", []))
        for step in steps:
            if step.get("op") not in OPS:
                raise ValueError(f"unknown degradation op {step.get('op')!r}")
        return cls(seed=int(data["seed"]), steps=[{"op": s["op"], "params": dict(s.get("params", {}))} for s in steps])

    @classmethod
    def from_json(cls, text: str) -> Recipe:
        return cls.from_dict(json.loads(text))


def apply_step(img, step: dict) -> np.ndarray:
    return OPS[step["op"]](img, **step["params"])


def replay(recipe: Recipe, img) -> np.ndarray:
    out = as_image(img)
    for step in recipe.steps:
        out = apply_step(out, step)
    return out


def _range(value, name):
    lo, hi = value
    if lo > hi:
        raise ConfigError(f"{name}: min {lo} > max {hi}")
    return float(lo), float(hi)


@dataclass
class StageConfig:
    blur_prob: float = 1.0
    kernel_sizes: tuple[int, ...] = (7, 9, 11, 13, 15, 17, 19, 21)
    blur_sigma: tuple[float, float] = (0.2, 3.0)
    aniso_prob: float = 0.35
    gaussian_noise_prob: float = 0.5
    noise_sigma: tuple[float, float] = (1 / 255, 30 / 255)
    gray_noise_prob: float = 0.4
    # photon-count scale, sampled log-uniformly
    poisson_scale: tuple[float, float] = (256 / 9, 102400.0)
    jpeg_quality: tuple[int, int] = (30, 95)
    chroma_subsample: bool = True

    def validate(self) -> None:
        for name in ("blur_sigma", "noise_sigma", "poisson_scale", "jpeg_quality"):
            _range(getattr(self, name), name)
        if any(k < 1 or k % 2 == 0 for k in self.kernel_sizes) or not self.kernel_sizes:
            raise ConfigError("kernel_sizes must be non-empty odd integers")
        if self.blur_sigma[0] <= 0 or self.poisson_scale[0] <= 0 or self.noise_sigma[0] < 0:
            raise ConfigError("blur sigma and poisson scale must be positive, noise sigma non-negative")
        lo, hi = self.jpeg_quality
        if not 1 <= lo <= hi <= 100:
            raise ConfigError("jpeg_quality must lie in 1..100")
        for name in ("blur_prob", "aniso_prob", "gaussian_noise_prob", "gray_noise_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be a probability")


def _second_stage() -> StageConfig:
    return StageConfig(
        blur_prob=0.8,
        blur_sigma=(0.2, 1.5),
        noise_sigma=(1 / 255, 25 / 255),
        poisson_scale=(256 / 6.25, 102400.0),
    )


@dataclass
class TwoStageConfig:
    first: StageConfig = field(default_factory=StageConfig)
    second: StageConfig = field(default_factory=_second_stage)
    second_prob: float = 1.0

    def validate(self) -> None:
        self.first.validate()
        self.second.validate()
        if not 0.0 <= self.second_prob <= 1.0:
            raise ConfigError("second_prob must be a probability")


@dataclass
class WeatherConfig:
    motion_severity: tuple[int, int] = (1, 5)
    snow_severity: tuple[int, int] = (1, 5)
    contrast_severity: tuple[int, int] = (1, 5)

    def validate(self) -> None:
        for name in ("motion_severity", "snow_severity", "contrast_severity"):
            lo, hi = _range(getattr(self, name), name)
            if not 1 <= lo <= hi <= 5:
                raise ConfigError(f"{name} must lie in 1..5")


@dataclass
class PolicyConfig:
    weather_prob: float = 0.4
    two_stage: TwoStageConfig = field(default_factory=TwoStageConfig)
    weather: WeatherConfig = field(default_factory=WeatherConfig)

    def validate(self) -> None:
        if not 0.0 <= self.weather_prob <= 1.0:
            raise ConfigError("weather_prob must be a probability")
        self.two_stage.validate()
        self.weather.validate()

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict | None) -> PolicyConfig:
        cfg = _build(cls, data or {})
        cfg.validate()
        return cfg


def _build(cls, data):
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r} for {cls.__name__}")
        sub = {"first": StageConfig, "second": StageConfig, "two_stage": TwoStageConfig, "weather": WeatherConfig}
        if key in sub and isinstance(value, dict):
            value = _build(sub[key], value)
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    return cls(**kwargs)


def _draw_seed(rng) -> int:
    return int(rng.integers(0, 1 << SEED_BITS))


def _sample_stage(img, stage: StageConfig, rng, recipe: Recipe) -> np.ndarray:
    h, w = img.shape[:2]
    if rng.random() < stage.blur_prob:
        size = int(rng.choice(stage.kernel_sizes))
        limit = min(h, w)
        if size > limit:
            size = limit if limit % 2 == 1 else limit - 1
        if rng.random() < stage.aniso_prob:
            sx = float(rng.uniform(*stage.blur_sigma))
            sy = float(rng.uniform(*stage.blur_sigma))
            theta = float(rng.uniform(-math.pi, math.pi))
        else:
            sx = sy = float(rng.uniform(*stage.blur_sigma))
            theta = 0.0
        recipe.add("gaussian_blur", sigma_x=sx, sigma_y=sy, theta=theta, size=size)
        img = apply_step(img, recipe.steps[-1])
    gray = bool(rng.random() < stage.gray_noise_prob)
    if rng.random() < stage.gaussian_noise_prob:
        recipe.add("gaussian_noise", sigma=float(rng.uniform(*stage.noise_sigma)), gray=gray, seed=_draw_seed(rng))
    else:
        lo, hi = np.log10(stage.poisson_scale)
        scale = float(10 ** rng.uniform(lo, hi))
        recipe.add("poisson_noise", scale=scale, gray=gray, seed=_draw_seed(rng))
    img = apply_step(img, recipe.steps[-1])
    lo, hi = stage.jpeg_quality
    recipe.add("jpeg", quality=int(rng.integers(lo, hi + 1)), chroma_subsample=stage.chroma_subsample)
    return apply_step(img, recipe.steps[-1])


def two_stage_pipeline(img, config: TwoStageConfig | None, rng) -> tuple[np.ndarray, Recipe]:
    """Blur, noise, JPEG; then the same chain again with milder ranges."""
    config = config or TwoStageConfig()
    config.validate()
    seed, gen = resolve(rng)
    recipe = Recipe(seed=seed)
    out = _sample_stage(as_image(img), config.first, gen, recipe)
    if gen.random() < config.second_prob:
        out = _sample_stage(out, config.second, gen, recipe)
    return out, recipe


def weather_branch(img, config: WeatherConfig | None, rng) -> tuple[np.ndarray, Recipe]:
    """Motion blur, snow and low contrast, with independently sampled severities."""
    config = config or WeatherConfig()
    config.validate()
    seed, gen = resolve(rng)
    recipe = Recipe(seed=seed)
    out = as_image(img)
    sev = int(gen.integers(config.motion_severity[0], config.motion_severity[1] + 1))
    recipe.add("motion_blur", severity=sev, angle=float(gen.uniform(-math.pi / 4, math.pi / 4)))
    out = apply_step(out, recipe.steps[-1])
    sev = int(gen.integers(config.snow_severity[0], config.snow_severity[1] + 1))
    snow_seed = _draw_seed(gen)
    if out.shape[2] == 3:
        recipe.add("snow", severity=sev, seed=snow_seed)
        out = apply_step(out, recipe.steps[-1])
    sev = int(gen.integers(config.contrast_severity[0], config.contrast_severity[1] + 1))
    recipe.add("contrast", severity=sev)
    return apply_step(out, recipe.steps[-1]), recipe


def degrade_item(img, seed: int, config: PolicyConfig | None = None) -> tuple[np.ndarray, Recipe, str]:
    """Route one image by its own seed and degrade it."""
    config = config or PolicyConfig()
    gen = np.random.default_rng(seed)
    if gen.random() < config.weather_prob:
        out, recipe = weather_branch(img, config.weather, gen)
        tag = WEATHER
    else:
        out, recipe = two_stage_pipeline(img, config.two_stage, gen)
        tag = TWO_STAGE
    # the item seed, not the inner draw, identifies the recipe
    recipe.seed = seed
    return out, recipe, tag


def batch_policy(batch, rng, config: PolicyConfig | None = None, threads: int = 1):
    """Degrade every image independently; returns ``(image, recipe, tag)`` triples.

    Item ``i`` uses ``child_seed(master, i)``, so results do not depend on
    ``threads`` or on evaluation order.
    """
    batch = list(batch)
    if not batch:
        raise ValueError("empty batch")
    config = config or PolicyConfig()
    config.validate()
    master, _ = resolve(rng)
    seeds = [child_seed(master, i) for i in range(len(batch))]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda a: degrade_item(a[0], a[1], config), zip(batch, seeds)))
    return [degrade_item(img, s, config) for img, s in zip(batch, seeds)]
