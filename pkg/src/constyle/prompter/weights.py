"""Weight container: ``<u64 header length><JSON header><little-endian float32 data>``.

The header maps tensor names to ``{"shape", "dtype", "offset", "nbytes"}``,
with offsets relative to the start of the data block.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import DataError
from .encoder import EncoderConfig, EncoderState

FORMAT = "constyle-weights"
VERSION = 1
EXCLUDED_PREFIXES = ("teacher.", "queue.", "classifier.", "teacher_classifier.")


def save_tensors(path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    header = {"format": FORMAT, "version": VERSION, "meta": meta or {}, "tensors": {}}
    blobs, offset = [], 0
    for name in sorted(tensors):
        data = np.ascontiguousarray(tensors[name], dtype="<f4").tobytes()
        header["tensors"][name] = {"shape": list(np.shape(tensors[name])), "dtype": "float32",
                                   "offset": offset, "nbytes": len(data)}
        blobs.append(data)
        offset += len(data)
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(raw)))
        fh.write(raw)
        for b in blobs:
            fh.write(b)


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        head = fh.read(8)
        if len(head) != 8:
            raise DataError(f"{path}: truncated weight file")
        (n,) = struct.unpack("<Q", head)
        try:
            header = json.loads(fh.read(n).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DataError(f"{path}: bad weight header") from exc
    if header.get("format") != FORMAT:
        raise DataError(f"{path}: not a {FORMAT} file")
    return header


def load_tensors(path) -> tuple[dict[str, np.ndarray], dict]:
    header = read_header(path)
    blob = Path(path).read_bytes()
    (n,) = struct.unpack("<Q", blob[:8])
    base = 8 + n
    tensors = {}
    for name, info in header["tensors"].items():
        start = base + info["offset"]
        chunk = blob[start : start + info["nbytes"]]
        if len(chunk) != info["nbytes"]:
            raise DataError(f"{path}: tensor {name} truncated")
        tensors[name] = np.frombuffer(chunk, dtype="<f4").astype(np.float32).reshape(info["shape"])
    return tensors, header["meta"]


def export_encoder(state: EncoderState, config: EncoderConfig, path) -> None:
    """Write only the prompt path: conv stages, BN statistics and projector."""
    tensors = {k: v for k, v in state.arrays().items() if not k.startswith(EXCLUDED_PREFIXES)}
    save_tensors(path, tensors, {"kind": "encoder", "config": config.to_dict()})


def load_encoder(path) -> tuple[EncoderState, EncoderConfig]:
    tensors, meta = load_tensors(path)
    if meta.get("kind") != "encoder":
        raise DataError(f"{path}: not an exported encoder")
    config = EncoderConfig.from_dict(meta["config"])
    buffers = {k: v for k, v in tensors.items() if ".running_" in k}
    params = {k: v for k, v in tensors.items() if k not in buffers}
    return EncoderState(params, buffers), config
