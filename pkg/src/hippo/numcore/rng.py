"""Seeded, splittable randomness on top of the Philox counter-based generator.

Children derived with :meth:`Rng.split` own independent streams keyed by a
hash of the parent key and the split tags, so draws in one stream are
unaffected by how many draws other streams made. Identical seed and identical
call sequence give bit-identical output across runs and platforms.
"""
from __future__ import annotations

import hashlib

import numpy as np

from ..errors import ParameterError

_SEED_MAX = 2**64


class Rng:
    algorithm = "philox4x64"

    def __init__(self, seed: int, _key: int | None = None):
        seed = int(seed)
        if not 0 <= seed < _SEED_MAX:
            raise ParameterError("seed must be an unsigned 64-bit integer")
        self.seed = seed
        self._key = _derive_key(seed, ()) if _key is None else _key
        self._gen = np.random.Generator(np.random.Philox(key=self._key))

    def split(self, *tags) -> "Rng":
        """Independent child stream addressed by the given tags."""
        if not tags:
            raise ParameterError("split requires at least one tag")
        return Rng(self.seed, _key=_derive_key(self._key, tags))

    def uniform(self, low: float, high: float, shape=None) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape)

    def integers(self, low: int, high: int, shape=None):
        """Integers in [low, high)."""
        out = self._gen.integers(low, high, size=shape)
        return int(out) if shape is None else out

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def normal(self, shape=None) -> np.ndarray:
        return self._gen.standard_normal(size=shape)

    def __repr__(self):
        return f"Rng(seed={self.seed}, key={self._key:#x})"


def _derive_key(parent: int, tags: tuple) -> int:
    h = hashlib.sha256()
    h.update(b"hippo.rng:")
    h.update(int(parent).to_bytes(32, "little"))
    for tag in tags:
        h.update(b"\x1f")
        h.update(str(tag).encode("utf-8"))
    return int.from_bytes(h.digest()[:16], "little")
