"""Seeded random streams and deterministic tiled execution.

Randomness: every stream is a Philox generator keyed by ``(seed, *keys)``
through ``SeedSequence.spawn_key``, so e.g. the guidance noise for step 7
does not depend on how many other streams were drawn before it.

Parallelism: work is cut into tiles whose boundaries depend only on the
problem size (never on the worker count).  Tile results come back in tile
order, and callers reduce them in that order, so outputs are bit-identical
for any number of workers.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

TILE_ROWS = 16


def stream(seed: int, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def row_tiles(n_rows: int, tile_rows: int = TILE_ROWS) -> List[slice]:
    return [slice(r, min(r + tile_rows, n_rows)) for r in range(0, n_rows, tile_rows)]


def map_tiles(fn: Callable[[slice], T], tiles: Sequence[slice], workers: int = 1) -> List[T]:
    """Apply ``fn`` to every tile; results are returned in tile order."""
    if workers <= 1 or len(tiles) <= 1:
        return [fn(t) for t in tiles]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tiles))
