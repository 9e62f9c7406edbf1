"""Seeded counter-based random streams.

Every random draw in the package comes from a Philox4x64-10 generator keyed
by a :class:`numpy.random.SeedSequence` built from ``(seed, purpose, shard)``.
Work is split into fixed-size shards, so serial and sharded-parallel
generation produce identical rows.
"""

from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np

RNG_ALGORITHM = "numpy.random.Philox(Philox4x64-10); substream key = SeedSequence([seed, crc32(purpose), shard])"
SHARD_SIZE = 65536


def purpose_code(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


def substream(seed: int, purpose: str, shard: int = 0) -> np.random.Generator:
    """Independent generator for one ``(seed, purpose, shard)`` triple."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    ss = np.random.SeedSequence([int(seed), purpose_code(purpose), int(shard)])
    return np.random.Generator(np.random.Philox(ss))


def sharded_draw(
    seed: int,
    purpose: str,
    n: int,
    draw: Callable[[np.random.Generator, int], np.ndarray],
    workers: int = 1,
    shard_size: int = SHARD_SIZE,
) -> np.ndarray:
    """Draw ``n`` rows shard by shard and concatenate them in shard order.

    ``draw(gen, rows)`` must return an array whose first axis has length
    ``rows``. The result does not depend on ``workers``.
    """
    n_shards = max(1, -(-n // shard_size))
    sizes = [min(shard_size, n - k * shard_size) for k in range(n_shards)]

    def one(k):
        return draw(substream(seed, purpose, k), sizes[k])

    if workers > 1 and n_shards > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(one, range(n_shards)))
    else:
        parts = [one(k) for k in range(n_shards)]
    return np.concatenate(parts, axis=0)
