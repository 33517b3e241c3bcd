"""Counter-based RNG derivation so independent stages never share streams.

Every random draw in the package goes through ``derive_rng``: a base seed plus
a tuple of stream keys (ints or short strings) is folded into a
``numpy.random.SeedSequence``, which guarantees independent, reproducible
streams regardless of the order stages run in.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["stream_key", "derive_rng"]


def stream_key(name: str) -> int:
    """Stable 32-bit key for a named stream (independent of PYTHONHASHSEED)."""
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def derive_rng(seed: int, *streams: int | str) -> np.random.Generator:
    """Generator for stream (seed, *streams); strings are hashed stably."""
    keys = [int(seed) & 0xFFFFFFFF]
    for s in streams:
        keys.append(stream_key(s) if isinstance(s, str) else int(s) & 0xFFFFFFFF)
    return np.random.default_rng(np.random.SeedSequence(keys))
