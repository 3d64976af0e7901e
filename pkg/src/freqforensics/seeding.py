"""Portable, keyed random streams.

All randomness in the toolkit flows through PCG64 generators derived from a
user seed plus a tuple of keys (image index, class label, ...). String keys
are hashed with SHA-256 so streams do not depend on PYTHONHASHSEED or
platform; identical (seed, keys) always yields an identical stream.
"""

import hashlib

import numpy as np


def _key_words(key) -> list[int]:
    if isinstance(key, (int, np.integer)):
        return [int(key) & 0xFFFFFFFF, (int(key) >> 32) & 0xFFFFFFFF]
    if isinstance(key, str):
        digest = hashlib.sha256(key.encode("utf-8")).digest()
        return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    raise TypeError(f"unsupported stream key type: {type(key)!r}")


def substream(seed: int, *keys) -> np.random.Generator:
    """Return a generator for the substream identified by (seed, *keys)."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for key in keys:
        entropy.extend(_key_words(key))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
