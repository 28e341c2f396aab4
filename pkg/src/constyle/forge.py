"""Mix Degradations dataset forging: edge-snapped tiling of source images,
synthetic noise/JPEG pair generation, and JSON Lines manifests."""

from __future__ import annotations

import fnmatch
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .degrade.pipeline import Recipe, replay
from .errors import ConfigError, DataError
from .image import crop as crop_image
from .image import load_image, quantize8, save_image
from .rng import SEED_BITS, child_seed, stable_key

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}
SYNTHETIC_KINDS = ("denoise", "jpeg")


def axis_positions(dim: int, crop: int, step: int) -> list[int]:
    """Grid offsets ``0, step, 2*step, ...`` plus a final crop flush with the border."""
    if crop <= 0 or step <= 0:
        raise ValueError("crop and step must be positive")
    if dim < crop:
        raise DataError(f"dimension {dim} smaller than crop {crop}")
    last = dim - crop
    pos = list(range(0, last + 1, step))
    if pos[-1] != last:
        pos.append(last)
    return pos


def plan_crops(width: int, height: int, crop: int, step: int) -> list[tuple[int, int]]:
    """Top-left ``(x, y)`` of every tile, row-major."""
    xs = axis_positions(width, crop, step)
    ys = axis_positions(height, crop, step)
    return [(x, y) for y in ys for x in xs]


def crop_count(width: int, height: int, crop: int, step: int) -> int:
    def per_axis(dim):
        extra = dim - crop
        return extra // step + 1 + (1 if extra % step else 0)

    return per_axis(width) * per_axis(height)


@dataclass
class SourceSpec:
    task: str
    target_dir: str
    input_dir: str | None = None
    crop: int = 256
    step: int = 256
    paired: bool = True
    synthetic: str | None = None
    exclude: list[str] = field(default_factory=list)
    noise_sigma: tuple[float, float] = (0.0, 50 / 255)
    jpeg_quality: tuple[int, int] = (10, 40)

    def __post_init__(self):
        if self.crop <= 0 or self.step <= 0:
            raise ConfigError(f"{self.task}: crop and step must be positive")
        if self.paired and not self.input_dir:
            raise ConfigError(f"{self.task}: paired task needs input_dir")
        if not self.paired and self.synthetic not in SYNTHETIC_KINDS:
            raise ConfigError(f"{self.task}: synthetic must be one of {SYNTHETIC_KINDS}")
        self.noise_sigma = tuple(self.noise_sigma)
        self.jpeg_quality = tuple(self.jpeg_quality)
        if self.noise_sigma[0] > self.noise_sigma[1] or self.jpeg_quality[0] > self.jpeg_quality[1]:
            raise ConfigError(f"{self.task}: range min exceeds max")

    @classmethod
    def from_dict(cls, data: dict, base: Path | None = None) -> SourceSpec:
        data = dict(data)
        for key in ("input_dir", "target_dir"):
            if data.get(key) and base is not None and not os.path.isabs(data[key]):
                data[key] = str(base / data[key])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(f"bad source spec: {exc}") from exc


@dataclass
class ManifestEntry:
    task: str
    image_id: str
    crop_index: int
    x: int
    y: int
    w: int
    h: int
    input: str
    target: str
    recipe: dict | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> ManifestEntry:
        return cls(**data)


def load_specs(path: str | os.PathLike) -> list[SourceSpec]:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read spec file {path}: {exc}") from exc
    sources = data.get("sources") if isinstance(data, dict) else data
    if not isinstance(sources, list):
        raise ConfigError(f"{path}: expected a 'sources' list")
    return [SourceSpec.from_dict(s, base=path.parent) for s in sources]


def list_images(directory: str | os.PathLike, exclude=()) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise DataError(f"source directory not found: {d}")
    files = sorted(
        p for p in d.iterdir()
        if p.suffix.lower() in IMAGE_SUFFIXES and not any(fnmatch.fnmatch(p.name, pat) for pat in exclude)
    )
    if not files:
        raise DataError(f"no source images in {d}")
    return files


def synthesize(spec: SourceSpec, clean_tile, seed: int) -> tuple[np.ndarray, Recipe]:
    """Degrade a clean tile for the synthetic denoise/JPEG tasks."""
    gen = np.random.default_rng(seed)
    recipe = Recipe(seed=seed)
    if spec.synthetic == "denoise":
        sigma = float(gen.uniform(*spec.noise_sigma))
        recipe.add("gaussian_noise", sigma=sigma, gray=False, seed=int(gen.integers(0, 1 << SEED_BITS)))
    else:
        lo, hi = spec.jpeg_quality
        recipe.add("jpeg", quality=int(gen.integers(lo, hi + 1)), chroma_subsample=True)
    return replay(recipe, clean_tile), recipe


def _forge_image(spec: SourceSpec, target_path: Path, out_dir: Path, seed: int, skipped: list):
    image_id = target_path.stem
    target = load_image(target_path)
    h, w = target.shape[:2]
    source = None
    if spec.paired:
        input_path = Path(spec.input_dir) / target_path.name
        if not input_path.exists():
            raise DataError(f"{spec.task}: no input image paired with {target_path.name}")
        source = load_image(input_path)
        if source.shape[:2] != target.shape[:2]:
            raise DataError(
                f"{spec.task}: {target_path.name} input {source.shape[1]}x{source.shape[0]} "
                f"!= target {w}x{h}"
            )
    if w < spec.crop or h < spec.crop:
        log.warning("%s: skipping %s (%dx%d smaller than crop %d)", spec.task, target_path.name, w, h, spec.crop)
        skipped.append({"task": spec.task, "image_id": image_id, "width": w, "height": h,
                        "reason": "smaller than crop"})
        return []

    entries = []
    for idx, (x, y) in enumerate(plan_crops(w, h, spec.crop, spec.step)):
        rel_in = f"{spec.task}/input/{image_id}_{idx:04d}.png"
        rel_tg = f"{spec.task}/target/{image_id}_{idx:04d}.png"
        tgt_tile = crop_image(target, x, y, spec.crop, spec.crop)
        recipe = None
        if spec.paired:
            in_tile = crop_image(source, x, y, spec.crop, spec.crop)
        else:
            tile_seed = child_seed(seed, stable_key(spec.task), stable_key(image_id), idx)
            in_tile, rec = synthesize(spec, tgt_tile, tile_seed)
            recipe = rec.to_dict()
        save_image(in_tile, out_dir / rel_in)
        save_image(tgt_tile, out_dir / rel_tg)
        entries.append(ManifestEntry(spec.task, image_id, idx, x, y, spec.crop, spec.crop, rel_in, rel_tg, recipe))
    return entries


def forge_task(spec: SourceSpec, out_dir, seed: int, threads: int = 1,
               skipped: list | None = None) -> list[ManifestEntry]:
    """Tile every usable image of one task; skipped images are appended to ``skipped``."""
    out_dir = Path(out_dir)
    for sub in ("input", "target"):
        (out_dir / spec.task / sub).mkdir(parents=True, exist_ok=True)
    targets = list_images(spec.target_dir, spec.exclude)
    skipped = skipped if skipped is not None else []
    local: list[list] = [[] for _ in targets]

    def work(i):
        return _forge_image(spec, targets[i], out_dir, seed, local[i])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_image = list(pool.map(work, range(len(targets))))
    else:
        per_image = [work(i) for i in range(len(targets))]
    for s in local:
        skipped.extend(s)
    return [e for entries in per_image for e in entries]


def write_manifest(entries, path) -> None:
    ordered = sorted(entries, key=lambda e: (e.task, e.image_id, e.crop_index))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in ordered:
            fh.write(e.to_json() + "\n")


def read_manifest(path) -> list[ManifestEntry]:
    entries = []
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    entries.append(ManifestEntry.from_dict(json.loads(line)))
                except (json.JSONDecodeError, TypeError) as exc:
                    raise DataError(f"{path}:{lineno}: bad manifest line ({exc})") from exc
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    return entries


def forge(specs, out_dir, seed: int, threads: int = 1) -> tuple[list[ManifestEntry], list[dict]]:
    """Forge all tasks and write ``manifest.jsonl`` (and ``skipped.jsonl`` if needed)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries, skipped = [], []
    for spec in specs:
        entries.extend(forge_task(spec, out_dir, seed, threads=threads, skipped=skipped))
    write_manifest(entries, out_dir / "manifest.jsonl")
    if skipped:
        with open(out_dir / "skipped.jsonl", "w", encoding="utf-8") as fh:
            for rec in skipped:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return entries, skipped


@dataclass
class VerifyReport:
    checked: int = 0
    replayed: int = 0
    findings: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings

    def to_dict(self) -> dict:
        return {"checked": self.checked, "replayed": self.replayed, "ok": self.ok, "findings": self.findings}


def verify_manifest(manifest, data_root, sample: int = 10, seed: int = 0) -> VerifyReport:
    """Check tile existence, sizes, pairing and replay a sample of synthetic recipes."""
    if isinstance(manifest, (str, os.PathLike)):
        manifest = read_manifest(manifest)
    root = Path(data_root)
    report = VerifyReport()
    loaded = {}

    def finding(kind, entry, detail):
        report.findings.append({"kind": kind, "task": entry.task, "image_id": entry.image_id,
                                "crop_index": entry.crop_index, "detail": detail})

    for entry in manifest:
        report.checked += 1
        shapes = []
        for rel in (entry.input, entry.target):
            p = root / rel
            if not p.exists():
                finding("missing_file", entry, rel)
                continue
            try:
                img = load_image(p)
            except DataError as exc:
                finding("unreadable", entry, str(exc))
                continue
            if entry.recipe:
                loaded[rel] = img
            shapes.append(img.shape[:2])
            if img.shape[:2] != (entry.h, entry.w):
                finding("bad_size", entry, f"{rel}: {img.shape[1]}x{img.shape[0]} != {entry.w}x{entry.h}")
        if len(shapes) == 2 and shapes[0] != shapes[1]:
            finding("pair_mismatch", entry, f"input {shapes[0]} vs target {shapes[1]}")

    synthetic = [e for e in manifest if e.recipe and e.input in loaded and e.target in loaded]
    if synthetic:
        rng = np.random.default_rng(seed)
        picks = rng.choice(len(synthetic), size=min(sample, len(synthetic)), replace=False)
        for i in sorted(int(p) for p in picks):
            e = synthetic[i]
            redo = quantize8(replay(Recipe.from_dict(e.recipe), loaded[e.target]))
            report.replayed += 1
            if not np.array_equal(redo, loaded[e.input]):
                finding("replay_mismatch", e, e.input)
    return report
