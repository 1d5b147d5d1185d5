"""Deterministic seed derivation.

Every stochastic component takes a ``numpy.random.Generator``. Sub-streams are
derived from a master seed plus string tags (image id, epoch index, pass
index) by hashing, so each unit of work gets an independent stream whose
bytes do not depend on scheduling order or worker count.
"""

import hashlib

import numpy as np

__all__ = ["derive_seed", "derive_rng"]


def derive_seed(master_seed: int, *tags) -> int:
    """Hash a master seed and a tag tuple down to a 64-bit child seed."""
    text = ":".join([str(int(master_seed))] + [str(t) for t in tags])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_rng(master_seed: int, *tags) -> np.random.Generator:
    """Generator seeded by ``derive_seed(master_seed, *tags)``."""
    return np.random.default_rng(derive_seed(master_seed, *tags))
