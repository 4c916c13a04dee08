"""
Named random sub-streams derived from a single root seed.
"""

import zlib

import numpy as np


def stream_key(name: str) -> int:
    """Stable 32-bit key for a stream name."""
    return zlib.crc32(name.encode("utf-8"))


def substream(root_seed: int, name: str, *keys: int) -> np.random.Generator:
    """Independent generator for (root seed, stream name, integer keys)."""
    sequence = np.random.SeedSequence(
        entropy=int(root_seed), spawn_key=(stream_key(name), *(int(k) for k in keys))
    )
    return np.random.default_rng(sequence)
