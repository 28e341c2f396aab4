"""PSNR / SSIM and benchmark aggregation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .image import as_image, load_image, luminance

PSNR_CAP = 100.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pair(a, b):
    a = as_image(a)
    b = as_image(b)
    if a.shape != b.shape:
        raise DataError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a, b


def _shave(arr, border):
    if border:
        return arr[border:-border, border:-border]
    return arr


def psnr(a, b, peak: float = 1.0, crop_border: int = 0) -> float:
    a, b = _pair(a, b)
    a, b = _shave(a, crop_border), _shave(b, crop_border)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(peak * peak / mse))


def _gauss_1d(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(x, g):
    # separable 'valid' correlation over the first two axes
    n = len(g)
    h, w = x.shape
    rows = sum(g[i] * x[i : h - n + 1 + i] for i in range(n))
    return sum(g[j] * rows[:, j : w - n + 1 + j] for j in range(n))


def ssim_map(a2d, b2d, data_range: float = 1.0) -> np.ndarray:
    g = _gauss_1d()
    if min(a2d.shape) < SSIM_WINDOW:
        raise DataError(f"image {a2d.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_a = _filter_valid(a2d, g)
    mu_b = _filter_valid(b2d, g)
    var_a = _filter_valid(a2d * a2d, g) - mu_a * mu_a
    var_b = _filter_valid(b2d * b2d, g) - mu_b * mu_b
    cov = _filter_valid(a2d * b2d, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a, b, channel_mode: str = "y", crop_border: int = 0) -> float:
    """Mean SSIM over valid 11x11 Gaussian windows.

    ``channel_mode="y"`` compares BT.601 luma; ``"rgb"`` averages per-channel SSIM.
    """
    a, b = _pair(a, b)
    a, b = _shave(a, crop_border), _shave(b, crop_border)
    if channel_mode == "y":
        return float(np.mean(ssim_map(luminance(a), luminance(b))))
    if channel_mode == "rgb":
        return float(np.mean([np.mean(ssim_map(a[:, :, c], b[:, :, c])) for c in range(a.shape[2])]))
    raise ValueError(f"unknown channel_mode {channel_mode!r}")


@dataclass
class MetricReport:
    items: list[dict] = field(default_factory=list)
    sets: dict[str, dict] = field(default_factory=dict)
    grand_psnr: float = float("nan")
    grand_ssim: float = float("nan")

    def to_dict(self) -> dict:
        return {"items": self.items, "sets": self.sets,
                "grand_mean": {"psnr": self.grand_psnr, "ssim": self.grand_ssim}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_table(self) -> str:
        name_w = max([len("set"), len("grand mean")] + [len(k) for k in self.sets])
        lines = [f"{'set':<{name_w}}  {'n':>6}  {'PSNR':>8}  {'SSIM':>7}"]
        for name in sorted(self.sets):
            s = self.sets[name]
            lines.append(f"{name:<{name_w}}  {s['n']:>6d}  {s['psnr']:>8.4f}  {s['ssim']:>7.4f}")
        lines.append(f"{'grand mean':<{name_w}}  {len(self.items):>6d}  "
                     f"{self.grand_psnr:>8.4f}  {self.grand_ssim:>7.4f}")
        return "\n".join(lines)


def aggregate(items: list[dict]) -> MetricReport:
    """Per-set arithmetic means, then an unweighted mean over sets."""
    items = sorted(items, key=lambda r: (r["set"], r["id"]))
    by_set: dict[str, list[dict]] = {}
    for r in items:
        by_set.setdefault(r["set"], []).append(r)
    if not by_set:
        raise DataError("no items to aggregate")
    sets = {
        name: {
            "n": len(rs),
            "psnr": math.fsum(r["psnr"] for r in rs) / len(rs),
            "ssim": math.fsum(r["ssim"] for r in rs) / len(rs),
        }
        for name, rs in by_set.items()
    }
    names = sorted(sets)
    return MetricReport(
        items=items,
        sets=sets,
        grand_psnr=math.fsum(sets[n]["psnr"] for n in names) / len(names),
        grand_ssim=math.fsum(sets[n]["ssim"] for n in names) / len(names),
    )


def evaluate_benchmark(manifest, restored_dir, data_root, channel_mode: str = "y",
                       crop_border: int = 0) -> MetricReport:
    """Score restored images against manifest targets.

    The restored counterpart of a target lives at the same relative path
    under ``restored_dir``; tasks act as benchmark sets.
    """
    from .forge import read_manifest

    if not isinstance(manifest, list):
        manifest = read_manifest(manifest)
    if not manifest:
        raise DataError("empty manifest")
    restored_dir = Path(restored_dir)
    data_root = Path(data_root)
    items = []
    for e in manifest:
        restored_path = restored_dir / e.target
        if not restored_path.exists():
            raise DataError(f"missing restored image: {restored_path}")
        target = load_image(data_root / e.target)
        restored = load_image(restored_path)
        items.append({
            "set": e.task,
            "id": f"{e.image_id}#{e.crop_index}",
            "psnr": psnr(restored, target, crop_border=crop_border),
            "ssim": ssim(restored, target, channel_mode=channel_mode, crop_border=crop_border),
        })
    return aggregate(items)
