"""Counter-based random streams.

Every sampled path owns a Philox stream keyed by (seed, path_index), so a
path's driver noise is reproducible no matter how paths are batched or in
which order they are drawn.  Step index equals position in the stream.
"""

from __future__ import annotations

import numpy as np

__all__ = ["path_generator", "path_normals", "spawn_seed"]

_MASK64 = (1 << 64) - 1


def path_generator(seed: int, path_index: int) -> np.random.Generator:
    """Philox generator dedicated to one sampled path."""
    if seed < 0 or path_index < 0:
        raise ValueError(f"seed and path_index must be nonnegative, got {seed}, {path_index}")
    key = np.array([np.uint64(seed), np.uint64(path_index)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def path_normals(seed: int, path_index: int, n: int) -> np.ndarray:
    """First `n` standard normals of the path's stream."""
    return path_generator(seed, path_index).standard_normal(n)


def spawn_seed(seed: int, tag: str) -> int:
    """Derive a sub-seed for an auxiliary stream (resampling, bootstrap).

    Stable across runs and platforms: a small FNV-1a hash of the tag mixed
    with the base seed.  Arithmetic wraps modulo 2^64.
    """
    h = 14695981039346656037
    for ch in tag.encode():
        h = ((h ^ ch) * 1099511628211) & _MASK64
    return ((seed * 0x9E3779B97F4A7C15) & _MASK64 ^ h) >> 1
