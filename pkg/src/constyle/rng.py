"""Seed derivation. Child seeds depend only on (master, keys), never on call order."""

import zlib

import numpy as np

SEED_BITS = 63


def child_seed(master: int, *keys: int) -> int:
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in keys))
    lo, hi = ss.generate_state(2, np.uint32)
    return (int(hi) << 32 | int(lo)) & ((1 << SEED_BITS) - 1)


def stable_key(text: str) -> int:
    return zlib.crc32(text.encode("utf-8"))


def resolve(seed_or_rng) -> tuple[int, np.random.Generator]:
    """Return ``(seed, generator)``; a Generator argument donates a fresh seed."""
    if isinstance(seed_or_rng, np.random.Generator):
        seed = int(seed_or_rng.integers(0, 1 << SEED_BITS))
    else:
        seed = int(seed_or_rng)
        if seed < 0:
            raise ValueError("seed must be non-negative")
    return seed, np.random.default_rng(seed)
