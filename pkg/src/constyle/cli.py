"""``constyle`` command line: forge, degrade, pretrain, eval, inspect.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, DataError, NumericalError

DEFAULT_SEED = 0
SCHEMA_VERSION = 1
THREADS_ENV = "CONSTYLE_FORGE_THREADS"

log = logging.getLogger("constyle")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


@dataclass
class RunConfig:
    subcommand: str
    config: str | None
    seed: int
    out: str | None
    verbosity: int


def default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def read_config(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"{path}: unsupported schema_version {version}")
    return data


def _cmd_forge(args) -> int:
    from .forge import forge, load_specs

    specs = load_specs(args.spec)
    entries, skipped = forge(specs, args.out, seed=args.seed, threads=args.threads)
    print(f"forged {len(entries)} tiles from {len(specs)} task(s) into {args.out}"
          + (f" ({len(skipped)} image(s) skipped)" if skipped else ""))
    return 0


def _cmd_degrade(args) -> int:
    from .degrade.pipeline import PolicyConfig, Recipe, degrade_item, replay, two_stage_pipeline, weather_branch
    from .image import load_image, save_image

    img = load_image(args.input)
    if args.recipe:
        try:
            recipe = Recipe.from_json(Path(args.recipe).read_text())
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot read recipe {args.recipe}: {exc}") from exc
        out = replay(recipe, img)
        tag = "replay"
    else:
        policy = PolicyConfig.from_dict(read_config(args.config).get("policy") if args.config else None)
        if args.branch == "weather":
            out, recipe = weather_branch(img, policy.weather, args.seed)
        elif args.branch == "two_stage":
            out, recipe = two_stage_pipeline(img, policy.two_stage, args.seed)
        else:
            out, recipe, _ = degrade_item(img, args.seed, policy)
        tag = args.branch
    save_image(out, args.output)
    if args.emit_recipe:
        Path(args.emit_recipe).write_text(recipe.to_json() + "\n")
    print(f"{tag}: {len(recipe.steps)} step(s) -> {args.output}")
    return 0


def _cmd_pretrain(args) -> int:
    from .degrade.pipeline import PolicyConfig, batch_policy
    from .prompter.encoder import EncoderConfig
    from .prompter.textures import ToyTextures
    from .prompter.train import (
        LossWeights,
        TrainConfig,
        classifier_accuracy,
        config_dict,
        pretrain_loop,
        similarity_gap,
    )
    from .prompter.weights import export_encoder
    from .rng import child_seed

    cfg = read_config(args.config)
    try:
        enc = EncoderConfig.from_dict(cfg.get("encoder", {}))
        train = TrainConfig(**cfg.get("train", {}))
        weights = LossWeights(**cfg.get("weights", {}))
    except TypeError as exc:
        raise ConfigError(f"{args.config}: {exc}") from exc
    policy = PolicyConfig.from_dict(cfg.get("policy"))
    data = cfg.get("data", {})
    seed = args.seed if args.seed is not None else int(cfg.get("seed", DEFAULT_SEED))
    iters = args.iters if args.iters is not None else train.total_iters
    if args.iters is not None and args.iters > train.total_iters:
        raise ConfigError("--iters exceeds train.total_iters")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset = ToyTextures(seed=int(data.get("seed", seed)), size=enc.input_size)
    state, records = pretrain_loop(
        dataset, enc, train, weights, seed=seed, policy=policy, log_path=out / "train_log.jsonl",
        checkpoint_dir=out / "checkpoints" if train.checkpoint_every else None, threads=args.threads, iters=iters,
    )
    export_encoder(state.student, enc, out / "encoder.bin")
    heldout = ToyTextures(seed=int(data.get("heldout_seed", seed + 1_000_003)), size=enc.input_size)
    x, y = heldout.take(int(data.get("heldout", 500)))
    degraded = np.stack([im for im, _, _ in batch_policy(list(x), child_seed(seed, 7), policy, threads=args.threads)])
    summary = {
        "seed": seed,
        "iterations": len(records),
        "heldout_accuracy": classifier_accuracy(state.student, enc, x, y),
        "heldout_similarity_gap": similarity_gap(state.student, state.teacher, enc, degraded, x),
        "final_loss_total": records[-1]["loss_total"] if records else None,
    }
    resolved = {"schema_version": SCHEMA_VERSION, "seed": seed, **config_dict(enc, train, weights),
                "policy": policy.to_dict(), "data": data}
    (out / "config.json").write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n")
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary, sort_keys=True))
    return 0


def _cmd_eval(args) -> int:
    from .metrics import evaluate_benchmark

    data_root = args.data_root or str(Path(args.manifest).parent)
    report = evaluate_benchmark(args.manifest, args.restored, data_root, channel_mode=args.channel,
                                crop_border=args.crop_border)
    if args.json:
        Path(args.json).write_text(report.to_json() + "\n")
    print(report.to_table())
    return 0


def _cmd_inspect(args) -> int:
    from .forge import read_manifest
    from .prompter.weights import read_header

    path = Path(args.path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    if path.suffix == ".jsonl":
        entries = read_manifest(path)
        tasks: dict[str, dict] = {}
        for e in entries:
            t = tasks.setdefault(e.task, {"tiles": 0, "images": set(), "synthetic": 0})
            t["tiles"] += 1
            t["images"].add(e.image_id)
            t["synthetic"] += e.recipe is not None
        summary = {"kind": "manifest", "entries": len(entries),
                   "tasks": {k: {"tiles": v["tiles"], "images": len(v["images"]), "synthetic": v["synthetic"]}
                             for k, v in sorted(tasks.items())}}
    else:
        header = read_header(path)
        tensors = header["tensors"]
        summary = {"kind": header["meta"].get("kind", "weights"), "tensors": len(tensors),
                   "parameters": int(sum(np.prod(t["shape"], dtype=np.int64) for t in tensors.values())),
                   "layers": {k: v["shape"] for k, v in sorted(tensors.items())}}
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="constyle", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def threads(sp):
        sp.add_argument("--threads", type=int, default=None,
                        help=f"worker threads (default: ${THREADS_ENV} or all cores); results do not depend on it")

    f = sub.add_parser("forge", help="tile sources into the Mix Degradations layout")
    f.add_argument("--spec", required=True, help="JSON file with a 'sources' list")
    f.add_argument("--out", required=True, help="output directory")
    f.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"master seed (default {DEFAULT_SEED})")
    threads(f)
    f.set_defaults(func=_cmd_forge)

    d = sub.add_parser("degrade", help="degrade one image or replay a recipe")
    d.add_argument("--input", required=True, help="source image")
    d.add_argument("--output", required=True, help="degraded image to write")
    d.add_argument("--recipe", help="replay this recipe JSON instead of sampling")
    d.add_argument("--emit-recipe", help="write the applied recipe as JSON")
    d.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"item seed (default {DEFAULT_SEED})")
    d.add_argument("--branch", choices=("auto", "weather", "two_stage"), default="auto",
                   help="force a branch; 'auto' routes 40%% weather / 60%% two-stage")
    d.add_argument("--config", help="JSON config with an optional 'policy' section")
    d.set_defaults(func=_cmd_degrade)

    t = sub.add_parser("pretrain", help="pre-train the prompter on the toy texture set")
    t.add_argument("--config", required=True, help="JSON training config")
    t.add_argument("--out", default="pretrain_out", help="output directory (default pretrain_out)")
    t.add_argument("--seed", type=int, default=None, help="override the config seed")
    t.add_argument("--iters", type=int, default=None, help="stop after this many iterations")
    threads(t)
    t.set_defaults(func=_cmd_pretrain)

    e = sub.add_parser("eval", help="PSNR/SSIM of restored tiles against manifest targets")
    e.add_argument("--manifest", required=True, help="manifest.jsonl")
    e.add_argument("--restored", required=True, help="directory mirroring target paths")
    e.add_argument("--data-root", help="root of manifest paths (default: manifest directory)")
    e.add_argument("--json", help="also write the report as JSON")
    e.add_argument("--channel", choices=("y", "rgb"), default="y", help="SSIM channel handling (default y)")
    e.add_argument("--crop-border", type=int, default=0, help="pixels shaved from each border (default 0)")
    e.set_defaults(func=_cmd_eval)

    i = sub.add_parser("inspect", help="summarize a manifest (.jsonl) or weight file")
    i.add_argument("path", help="file to inspect")
    i.set_defaults(func=_cmd_inspect)
    return p


def parse_run_config(args) -> RunConfig:
    return RunConfig(subcommand=args.command, config=getattr(args, "config", None) or getattr(args, "spec", None),
                     seed=getattr(args, "seed", None) if getattr(args, "seed", None) is not None else DEFAULT_SEED,
                     out=getattr(args, "out", None), verbosity=args.verbose)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if hasattr(args, "threads") and args.threads is None:
            args.threads = default_threads()
        if getattr(args, "threads", 1) < 1:
            raise UsageError("--threads must be >= 1")
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
