"""Splittable, counter-based random streams.

Every stochastic routine in the package takes an :class:`RngSeed` and derives
child streams from it with :meth:`RngSeed.child`. A child is addressed by its
path of keys, never by the order in which it was requested, so results do not
depend on loop order or on how work is scheduled across processes.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


def _key_to_int(key: int | str) -> int:
    if isinstance(key, (bool, np.bool_)):
        return int(key)
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError(f"stream keys must be non-negative, got {key}")
        return int(key)
    if isinstance(key, str):
        return int.from_bytes(hashlib.blake2b(key.encode(), digest_size=8).digest(), "little")
    raise TypeError(f"unsupported stream key type: {type(key).__name__}")


@dataclass(frozen=True)
class RngSeed:
    """A (seed, stream_id) pair naming one reproducible Philox stream."""

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not (0 <= self.seed <= _MASK64) or not (0 <= self.stream_id <= _MASK64):
            raise ValueError("seed and stream_id must be unsigned 64-bit integers")

    def child(self, *keys: int | str) -> RngSeed:
        """Derive an independent sub-stream addressed by ``keys``."""
        if not keys:
            return self
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *map(_key_to_int, keys)))
        return RngSeed(self.seed, int(ss.generate_state(1, np.uint64)[0]))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.Philox(ss))

    def to_dict(self) -> dict:
        return {"seed": self.seed, "stream_id": self.stream_id}


def as_seed(value: RngSeed | int | None) -> RngSeed:
    if isinstance(value, RngSeed):
        return value
    if value is None:
        return RngSeed(0)
    return RngSeed(int(value))
