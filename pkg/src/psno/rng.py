"""Counter-based seeding: splitmix64 keys feeding numpy's PCG64 generator."""
from __future__ import annotations

import zlib

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(seed: int, *keys) -> int:
    """Fold integer or string keys into a 64-bit seed, order-sensitive."""
    state = splitmix64(int(seed) & _MASK)
    for key in keys:
        if isinstance(key, str):
            key = zlib.crc32(key.encode("utf-8"))
        state = splitmix64(state ^ (int(key) & _MASK))
    return state


def generator(seed: int, *keys) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(seed, *keys)))
