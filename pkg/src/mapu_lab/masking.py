"""Temporal block masking of raw signals.

A signal of length L is cut into ``n_blocks`` contiguous blocks (the last one
absorbs any remainder). Per sample, a fixed number of blocks is zeroed across
all channels. Which blocks is decided by a xoshiro256** stream seeded from
(run seed, epoch, sample index), so a sample gets the same mask no matter
which batch it lands in.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field

from mapu_lab._defaults import DEFAULT_MASK_BLOCKS, DEFAULT_MASK_RATIO
from mapu_lab.diffmath import Tensor
from mapu_lab.errors import DomainError, ShapeError


_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class MaskSpec(BaseModel):
    """How much of each signal to hide and with which seed.

    ``rng_seed`` left as ``None`` means "use the seed of the run".
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    ratio: float = Field(default=DEFAULT_MASK_RATIO, gt=0.0, le=1.0)
    n_blocks: int = Field(default=DEFAULT_MASK_BLOCKS, ge=1)
    rng_seed: int | None = Field(default=None, ge=0)

    @property
    def masked_blocks(self) -> int:
        """round(ratio * n_blocks), halves rounded up."""
        return int(np.floor(self.ratio * self.n_blocks + 0.5))

    def seeded(self, run_seed: int) -> MaskSpec:
        if self.rng_seed is not None:
            return self
        return self.model_copy(update={"rng_seed": run_seed})


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + _GOLDEN) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Xoshiro256StarStar:
    """xoshiro256** over Python ints, state filled by splitmix64."""

    __slots__ = ("_s",)

    def __init__(self, seed: int) -> None:
        state = seed & _MASK64
        words = []
        for _ in range(4):
            state, out = _splitmix64(state)
            words.append(out)
        self._s = words

    @classmethod
    def for_sample(cls, run_seed: int, epoch: int, index: int) -> Xoshiro256StarStar:
        """Independent stream per (run seed, epoch, sample index)."""
        key = run_seed & _MASK64
        for word in (epoch, index):
            _, key = _splitmix64(key ^ (word & _MASK64))
        return cls(key)

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[1] * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s[1] << 17) & _MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection, no modulo bias."""
        if n < 1:
            raise DomainError(f"bound must be positive, got {n}")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % n


def block_bounds(length: int, n_blocks: int) -> list[tuple[int, int]]:
    """[start, stop) of each block; the last block runs to ``length``."""
    if length < n_blocks:
        raise ShapeError(f"cannot cut length {length} into {n_blocks} blocks")
    size = length // n_blocks
    bounds = [(b * size, (b + 1) * size) for b in range(n_blocks)]
    bounds[-1] = (bounds[-1][0], length)
    return bounds


def choose_blocks(rng: Xoshiro256StarStar, n_blocks: int, count: int) -> list[int]:
    """``count`` distinct block indices via a partial Fisher-Yates shuffle."""
    order = list(range(n_blocks))
    for i in range(count):
        j = i + rng.below(n_blocks - i)
        order[i], order[j] = order[j], order[i]
    return sorted(order[:count])


def temporal_mask(
    x: Tensor | NDArray[np.float64],
    spec: MaskSpec,
    *,
    epoch: int = 0,
    indices: NDArray[np.int64] | None = None,
) -> tuple[Tensor, NDArray[np.bool_]]:
    """Zero ``spec.masked_blocks`` whole blocks per sample.

    Returns the masked copy as a constant tensor and a [B, n_blocks] boolean
    mask (True where zeroed). ``indices`` are the dataset positions of the
    batch rows; they default to 0..B-1.
    """
    data = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    if data.ndim != 3:
        raise ShapeError(f"temporal_mask expects [B,C,L], got {data.shape}")
    batch, _, length = data.shape
    count = spec.masked_blocks
    if count < 1 or count > spec.n_blocks:
        raise DomainError(f"ratio {spec.ratio} masks {count} of {spec.n_blocks} blocks")
    bounds = block_bounds(length, spec.n_blocks)
    if indices is None:
        indices = np.arange(batch, dtype=np.int64)
    elif len(indices) != batch:
        raise ShapeError(f"got {len(indices)} sample indices for a batch of {batch}")
    run_seed = spec.rng_seed if spec.rng_seed is not None else 0

    out = data.copy()
    mask = np.zeros((batch, spec.n_blocks), dtype=bool)
    for row, index in enumerate(indices):
        rng = Xoshiro256StarStar.for_sample(run_seed, epoch, int(index))
        for block in choose_blocks(rng, spec.n_blocks, count):
            start, stop = bounds[block]
            out[row, :, start:stop] = 0.0
            mask[row, block] = True
    return Tensor(out), mask
