"""Seed splitting.

Every stochastic component draws from its own ``numpy.random.Generator``. The
generator for a component is a pure function of the root seed and the component's
name path, so adding or removing an unrelated component never shifts another
component's stream.

The splitting scheme: each name is hashed with CRC-32 and the hashes form the
``spawn_key`` of a ``SeedSequence`` whose entropy is the root seed.
"""

from __future__ import annotations

import zlib

import numpy as np


def derive_seed_sequence(root: int, *names: str | int) -> np.random.SeedSequence:
    key = tuple(zlib.crc32(str(name).encode("utf-8")) for name in names)
    return np.random.SeedSequence(entropy=int(root), spawn_key=key)


def derive_rng(root: int, *names: str | int) -> np.random.Generator:
    """Returns the generator for the component at ``names`` under ``root``.

    Args:
        root: root seed of the run.
        names: component path, e.g. ``("init", "decoder")``.
    """
    return np.random.default_rng(derive_seed_sequence(root, *names))


class SeedTree:
    """Hands out generators for the components below one name path.

    >>> seeds = SeedTree(7, "init")
    >>> conv = seeds("encoder", "stem")
    >>> same = seeds.child("encoder")("stem")
    >>> bool(conv.integers(1000) == same.integers(1000))
    True
    """

    def __init__(self, root: int, *path: str | int) -> None:
        self.root = int(root)
        self.path = tuple(path)

    def __call__(self, *names: str | int) -> np.random.Generator:
        return derive_rng(self.root, *self.path, *names)

    def child(self, *names: str | int) -> SeedTree:
        return SeedTree(self.root, *self.path, *names)
