"""Seeded mini-batch order."""

from __future__ import annotations

from collections.abc import Iterator

import numpy as np
from numpy.typing import NDArray

MIN_BATCH = 2


def iter_batches(n: int, batch_size: int, seed: int, epoch: int) -> Iterator[NDArray[np.int64]]:
    """Yield index arrays of a permutation drawn from (seed, epoch).

    A trailing batch smaller than two samples is dropped; batchnorm needs at
    least two values per channel.
    """
    order = np.random.default_rng([seed, epoch]).permutation(n)
    for start in range(0, n, batch_size):
        chunk = order[start : start + batch_size]
        if len(chunk) < MIN_BATCH:
            break
        yield chunk.astype(np.int64)
