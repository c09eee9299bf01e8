"""Seeded random streams.

Every random decision in the library draws from a :class:`Prng`. A stream is
identified by the root seed plus a path of stage labels, e.g.
``("clutterbox", "placement", 3)``. Sub-seeds are obtained by hashing that
path with BLAKE2b, so adding a new stage never shifts the numbers drawn by
an existing one. The underlying generator is numpy's PCG64.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(seed: int, path: tuple) -> int:
    """64-bit sub-seed for ``seed`` followed by the labels in ``path``."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(seed) & _MASK64).encode())
    for label in path:
        h.update(b"\x1f")
        h.update(str(label).encode())
    return int.from_bytes(h.digest(), "little")


@dataclass
class Prng:
    seed: int
    path: tuple = ()
    _gen: np.random.Generator | None = field(default=None, repr=False, compare=False)

    def child(self, *labels) -> "Prng":
        return Prng(self.seed, self.path + tuple(labels))

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            self._gen = np.random.Generator(np.random.PCG64(derive_seed(self.seed, self.path)))
        return self._gen

    def random(self, size=None):
        return self.generator.random(size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size=size)

    def choice(self, a, size=None, replace=True):
        return self.generator.choice(a, size=size, replace=replace)

    def permutation(self, x):
        return self.generator.permutation(x)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)
