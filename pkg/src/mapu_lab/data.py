"""Synthetic domain-shifted time series and the TSD1 dataset container.

Each class has an archetype waveform. A domain applies a set of shift
transforms on top (amplitude scale, time warp, phase jitter, pairwise channel
mixing, Gaussian noise). One scalar knob in [0, 1] interpolates every shift
parameter from "unshifted" to "fully shifted".

File layout (little-endian): magic ``TSD1``, u32 version, u64 n, u32 C,
u32 L, u32 K (28 bytes), then n u32 labels, then n*C*L float32 samples
ordered [sample][channel][time].
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field

from mapu_lab.errors import DataFormatError, DomainError, ShapeError
from mapu_lab.output import atomic_write

logger = logging.getLogger(__name__)

DATASET_MAGIC = b"TSD1"
DATASET_VERSION = 1
HEADER = struct.Struct("<4sIQIII")
NOISE_CLIP_SIGMAS = 6.0

Waveform = Literal["sine", "square", "chirp"]


class ClassArchetype(BaseModel):
    """Base waveform of one class; ``frequency`` is in cycles per window."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    frequency: float = Field(gt=0.0)
    waveform: Waveform = "sine"
    amplitude: float = Field(default=1.0, gt=0.0)


class ShiftParams(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    noise_sigma: float = Field(default=0.1, ge=0.0)
    amplitude_scale: float = Field(default=1.0, gt=0.0)
    phase_jitter: float = Field(default=0.5, ge=0.0)
    time_warp: float = Field(default=1.0, ge=0.5, le=2.0)
    mixing_angle: float = 0.0

    @classmethod
    def from_knob(cls, knob: float, *, phase_jitter: float = 0.5) -> ShiftParams:
        """Interpolate all shift parameters; 0 is the unshifted domain."""
        if not 0.0 <= knob <= 1.0:
            raise DomainError(f"shift knob must be in [0, 1], got {knob}")
        return cls(
            noise_sigma=0.1 + 0.3 * knob,
            amplitude_scale=1.0 + 0.6 * knob,
            phase_jitter=phase_jitter,
            time_warp=1.0 + 0.4 * knob,
            mixing_angle=knob * np.pi / 4.0,
        )


def default_archetypes() -> list[ClassArchetype]:
    return [
        ClassArchetype(frequency=2.0, waveform="sine", amplitude=1.0),
        ClassArchetype(frequency=5.0, waveform="square", amplitude=0.8),
        ClassArchetype(frequency=3.0, waveform="chirp", amplitude=1.0),
        ClassArchetype(frequency=8.0, waveform="sine", amplitude=0.6),
        ClassArchetype(frequency=4.0, waveform="square", amplitude=1.2),
        ClassArchetype(frequency=6.0, waveform="chirp", amplitude=0.7),
    ]


class DomainSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    archetypes: list[ClassArchetype] = Field(default_factory=default_archetypes, min_length=1)
    shift: ShiftParams = Field(default_factory=ShiftParams)
    seed: int = Field(default=0, ge=0)


@dataclass
class Dataset:
    """Labeled signals: ``samples`` float32 [n, C, L], ``labels`` int64 [n]."""

    samples: NDArray[np.float32]
    labels: NDArray[np.int64]
    num_classes: int

    def __post_init__(self) -> None:
        if self.samples.ndim != 3:
            raise ShapeError(f"samples must be [n, C, L], got {self.samples.shape}")
        if self.labels.shape != (self.samples.shape[0],):
            raise ShapeError(f"{self.labels.shape[0]} labels for {self.samples.shape[0]} samples")
        if self.samples.shape[0] < 1:
            raise ShapeError("a dataset needs at least one sample")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise DomainError(f"labels must lie in [0, {self.num_classes})")

    @property
    def n(self) -> int:
        return int(self.samples.shape[0])

    @property
    def channels(self) -> int:
        return int(self.samples.shape[1])

    @property
    def length(self) -> int:
        return int(self.samples.shape[2])

    def batch(self, indices: NDArray[np.int64]) -> NDArray[np.float64]:
        """Rows at ``indices`` widened to float64."""
        return self.samples[indices].astype(np.float64)

    def subset(self, indices: NDArray[np.int64]) -> Dataset:
        return Dataset(self.samples[indices], self.labels[indices], self.num_classes)


def domain_seed(run_seed: int, role: int) -> int:
    """Stable generator seed for the domain ``role`` (0 source, 1 target) of a run."""
    return int(np.random.SeedSequence([run_seed, role]).generate_state(1, dtype=np.uint32)[0])


def _waveforms(
    kind: NDArray[np.str_],
    freq: NDArray[np.float64],
    tau: NDArray[np.float64],
    phase: NDArray[np.float64],
) -> NDArray[np.float64]:
    sine = np.sin(2.0 * np.pi * freq * tau + phase)
    chirp = np.sin(2.0 * np.pi * freq * (tau + 0.5 * tau * tau) + phase)
    square = np.where(sine >= 0.0, 1.0, -1.0)
    return np.where(kind == "chirp", chirp, np.where(kind == "square", square, sine))


def _mix_pairs(x: NDArray[np.float64], angle: float) -> NDArray[np.float64]:
    """Rotate channel pairs (0,1), (2,3), ... scaled so the peak bound holds."""
    if angle == 0.0:
        return x
    cos, sin = np.cos(angle), np.sin(angle)
    norm = abs(cos) + abs(sin)
    out = x.copy()
    for c in range(0, x.shape[1] - 1, 2):
        a, b = x[:, c], x[:, c + 1]
        out[:, c] = (cos * a - sin * b) / norm
        out[:, c + 1] = (sin * a + cos * b) / norm
    return out


def generate_domain(spec: DomainSpec, n: int, channels: int, length: int, num_classes: int) -> Dataset:
    """Draw ``n`` balanced samples of the first ``num_classes`` archetypes."""
    if num_classes > len(spec.archetypes):
        raise DomainError(f"{num_classes} classes requested but only {len(spec.archetypes)} archetypes")
    if n < 1 or channels < 1 or length < 2:
        raise ShapeError(f"cannot generate n={n}, C={channels}, L={length}")
    shift = spec.shift
    archetypes = spec.archetypes[:num_classes]
    nyquist = length / 2.0
    for k, arch in enumerate(archetypes):
        peak = arch.frequency * shift.time_warp * (2.0 if arch.waveform == "chirp" else 1.0)
        if peak >= nyquist:
            raise DomainError(f"class {k}: peak frequency {peak:g} is not below Nyquist {nyquist:g} for L={length}")

    rng = np.random.default_rng(spec.seed)
    labels = rng.permutation(np.arange(n) % num_classes).astype(np.int64)

    freq = np.array([a.frequency for a in archetypes])[labels][:, None, None]
    amp = np.array([a.amplitude for a in archetypes])[labels][:, None, None]
    kind = np.array([a.waveform for a in archetypes])[labels][:, None, None]
    phase = np.zeros((n, 1, 1))
    if shift.phase_jitter:
        phase = rng.uniform(-shift.phase_jitter, shift.phase_jitter, size=(n, 1, 1))
    channel_offset = (np.pi / 2.0) * np.arange(channels)[None, :, None] / channels
    tau = (np.arange(length) / length * shift.time_warp)[None, None, :]

    x = amp * shift.amplitude_scale * _waveforms(kind, freq, tau, phase + channel_offset)
    x = _mix_pairs(x, shift.mixing_angle)
    if shift.noise_sigma > 0.0:
        bound = NOISE_CLIP_SIGMAS * shift.noise_sigma
        x = x + np.clip(rng.normal(0.0, shift.noise_sigma, size=x.shape), -bound, bound)

    logger.debug("Generated domain seed=%d n=%d shift=%s", spec.seed, n, shift)
    return Dataset(x.astype(np.float32), labels, num_classes)


def split(ds: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Stratified, seeded split; each class contributes round(fraction * count) to train."""
    if not 0.0 < train_fraction < 1.0:
        raise DomainError(f"train fraction must be in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(seed)
    train_idx: list[NDArray[np.int64]] = []
    test_idx: list[NDArray[np.int64]] = []
    for k in range(ds.num_classes):
        members = rng.permutation(np.flatnonzero(ds.labels == k))
        cut = int(np.floor(train_fraction * len(members) + 0.5))
        train_idx.append(members[:cut])
        test_idx.append(members[cut:])
    train = np.sort(np.concatenate(train_idx)).astype(np.int64)
    test = np.sort(np.concatenate(test_idx)).astype(np.int64)
    if train.size == 0 or test.size == 0:
        raise DomainError(f"fraction {train_fraction} leaves an empty part for n={ds.n}")
    return ds.subset(train), ds.subset(test)


# ── Files ────────────────────────────────────────────────────────────────


def dataset_bytes(ds: Dataset) -> bytes:
    header = HEADER.pack(DATASET_MAGIC, DATASET_VERSION, ds.n, ds.channels, ds.length, ds.num_classes)
    return header + ds.labels.astype("<u4").tobytes() + np.ascontiguousarray(ds.samples, dtype="<f4").tobytes()


def save(ds: Dataset, path: Path) -> None:
    atomic_write(path, dataset_bytes(ds))
    logger.debug("Wrote dataset %s (n=%d)", path, ds.n)


def load(path: Path) -> Dataset:
    raw = path.read_bytes()
    if len(raw) < HEADER.size:
        raise DataFormatError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, version, n, channels, length, num_classes = HEADER.unpack_from(raw)
    if magic != DATASET_MAGIC:
        raise DataFormatError(f"{path}: not a dataset file (bad magic {magic!r})")
    if version != DATASET_VERSION:
        raise DataFormatError(f"{path}: unsupported version {version}, expected {DATASET_VERSION}")
    expected = HEADER.size + 4 * n + 4 * n * channels * length
    if len(raw) < expected:
        raise DataFormatError(f"{path}: truncated, {len(raw)} of {expected} bytes")
    if len(raw) > expected:
        raise DataFormatError(f"{path}: {len(raw) - expected} trailing bytes")
    labels = np.frombuffer(raw, dtype="<u4", count=n, offset=HEADER.size).astype(np.int64)
    samples = np.frombuffer(raw, dtype="<f4", count=n * channels * length, offset=HEADER.size + 4 * n)
    try:
        return Dataset(samples.reshape(n, channels, length).astype(np.float32), labels, num_classes)
    except (ShapeError, DomainError) as e:
        raise DataFormatError(f"{path}: {e}") from e
