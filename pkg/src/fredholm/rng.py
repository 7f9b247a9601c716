"""Reproducible white noise.

Noise for path ``i`` of stream ``stream`` under ``seed`` is row
``i % BLOCK_SIZE`` of block ``i // BLOCK_SIZE``, and each block comes from its
own Philox generator keyed by ``(seed, stream, block)``. Any path can be
regenerated on its own, and ensembles are identical however the blocks are
scheduled.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidArgumentError

__all__ = [
    "BLOCK_SIZE",
    "NoiseVector",
    "block_noise",
    "noise_matrix",
    "noise_vector",
    "iter_blocks",
    "MomentAccumulator",
    "run_blocks",
    "default_workers",
]

BLOCK_SIZE = 4096


def _generator(seed: int, stream: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(block)))
    return np.random.Generator(np.random.Philox(ss))


def block_noise(seed: int, stream: int, block: int, n_noise: int) -> np.ndarray:
    return _generator(seed, stream, block).standard_normal((BLOCK_SIZE, n_noise))


@dataclass(frozen=True, eq=False)
class NoiseVector:
    values: np.ndarray
    seed: int
    index: int
    stream: int = 0


def noise_vector(seed: int, index: int, n_noise: int, stream: int = 0) -> NoiseVector:
    b, r = divmod(int(index), BLOCK_SIZE)
    v = block_noise(seed, stream, b, n_noise)[r].copy()
    v.setflags(write=False)
    return NoiseVector(v, int(seed), int(index), int(stream))


def iter_blocks(n_paths: int):
    """Yield ``(block, start, stop)`` covering ``range(n_paths)``."""
    if n_paths <= 0:
        raise InvalidArgumentError("n_paths must be positive")
    for b in range(math.ceil(n_paths / BLOCK_SIZE)):
        yield b, b * BLOCK_SIZE, min((b + 1) * BLOCK_SIZE, n_paths)


def noise_matrix(seed: int, n_paths: int, n_noise: int, stream: int = 0) -> np.ndarray:
    """``(n_paths, n_noise)`` standard normals for paths ``0 .. n_paths-1``."""
    out = np.empty((n_paths, n_noise))
    for b, lo, hi in iter_blocks(n_paths):
        out[lo:hi] = block_noise(seed, stream, b, n_noise)[: hi - lo]
    return out


def default_workers() -> int:
    env = os.environ.get("FREDHOLM_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InvalidArgumentError(f"FREDHOLM_THREADS must be an integer, got {env!r}") from None
    return 1


class MomentAccumulator:
    """Exact-order accumulation of per-block sums and sums of squares.

    Blocks are added in block order and combined with ``math.fsum``, so the
    totals do not depend on how blocks were scheduled.
    """

    def __init__(self, n_stats: int):
        self.n_stats = n_stats
        self._sums: list[np.ndarray] = []
        self._sq: list[np.ndarray] = []
        self.count = 0

    def add(self, values: np.ndarray):
        v = np.asarray(values, dtype=float).reshape(-1, self.n_stats)
        self._sums.append(v.sum(axis=0))
        self._sq.append((v * v).sum(axis=0))
        self.count += v.shape[0]

    def mean(self) -> np.ndarray:
        return np.array([math.fsum(s[k] for s in self._sums) for k in range(self.n_stats)]) / self.count

    def std_error(self) -> np.ndarray:
        m = self.mean()
        sq = np.array([math.fsum(s[k] for s in self._sq) for k in range(self.n_stats)]) / self.count
        var = np.maximum(sq - m * m, 0.0) * self.count / max(self.count - 1, 1)
        return np.sqrt(var / self.count)


def run_blocks(
    fn: Callable[[np.ndarray], np.ndarray],
    n_paths: int,
    n_noise: int,
    seed: int,
    n_stats: int,
    stream: int = 0,
    workers: int | None = None,
) -> MomentAccumulator:
    """Evaluate ``fn(noise_block) -> (rows, n_stats)`` over all paths.

    ``workers`` threads evaluate blocks concurrently; results are folded in
    block order.
    """
    workers = default_workers() if workers is None else max(1, int(workers))
    blocks = list(iter_blocks(n_paths))

    def one(item):
        b, lo, hi = item
        return fn(block_noise(seed, stream, b, n_noise)[: hi - lo])

    acc = MomentAccumulator(n_stats)
    if workers == 1:
        for item in blocks:
            acc.add(one(item))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for res in pool.map(one, blocks):
                acc.add(res)
    return acc
