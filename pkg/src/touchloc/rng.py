"""Named random streams: one independent generator per (experiment seed, purpose)."""
from __future__ import annotations

import zlib

import numpy as np


def stream(seed: int, tag: str) -> np.random.Generator:
    """Philox generator keyed by ``seed`` and a CRC of ``tag``.

    Adding a new tag (say a new metric) never shifts the draws of another.
    """
    key = np.random.SeedSequence([int(seed), zlib.crc32(tag.encode("utf-8"))])
    return np.random.Generator(np.random.Philox(key))
