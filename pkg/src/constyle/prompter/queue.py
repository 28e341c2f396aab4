"""Fixed-capacity FIFO bank of unit-norm keys used as InfoNCE negatives."""

from __future__ import annotations

import numpy as np

NORM_TOL = 1e-3


class NegativeQueue:
    def __init__(self, capacity: int, dim: int, dtype=np.float32):
        if capacity < 1 or dim < 1:
            raise ValueError("capacity and dim must be positive")
        self.capacity = capacity
        self.dim = dim
        self._buf = np.zeros((capacity, dim), dtype=dtype)
        self._cursor = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    @property
    def cursor(self) -> int:
        return self._cursor

    def enqueue(self, key) -> NegativeQueue:
        key = np.asarray(key)
        if key.shape != (self.dim,):
            raise ValueError(f"key must have shape ({self.dim},), got {key.shape}")
        norm = float(np.sqrt(np.dot(key.astype(np.float64), key.astype(np.float64))))
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"key must be unit-norm, got norm {norm:.6g}")
        self._buf[self._cursor] = key
        self._cursor = (self._cursor + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)
        return self

    def enqueue_many(self, keys) -> NegativeQueue:
        for k in np.asarray(keys):
            self.enqueue(k)
        return self

    def keys(self) -> np.ndarray:
        """Stored keys, oldest first."""
        if self._size < self.capacity:
            return self._buf[: self._size].copy()
        return np.concatenate([self._buf[self._cursor :], self._buf[: self._cursor]])

    @classmethod
    def random(cls, capacity: int, dim: int, rng: np.random.Generator, dtype=np.float32) -> NegativeQueue:
        """A full queue of random unit vectors, the usual starting point."""
        q = cls(capacity, dim, dtype)
        v = rng.standard_normal((capacity, dim))
        q._buf[:] = v / np.linalg.norm(v, axis=1, keepdims=True)
        q._size = capacity
        return q

    def state(self) -> dict:
        return {"keys": self._buf.copy(), "cursor": self._cursor, "size": self._size}
