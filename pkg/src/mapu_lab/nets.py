"""Encoder, classifier, temporal imputer and evidential head, plus checkpoint I/O.

All four networks live in one ``ModelBundle`` as named parameter groups. A
group can be frozen; frozen parameters do not require gradients, so they
receive none and the optimizer leaves them untouched.
"""

from __future__ import annotations

import json
import logging
import struct
from collections.abc import Generator, Iterator
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from mapu_lab._defaults import DEFAULT_HIDDEN, DEFAULT_KERNEL_SIZE, DEFAULT_WIDTHS
from mapu_lab.diffmath import BatchNormStats, Tensor, ops
from mapu_lab.errors import DataFormatError, ShapeError
from mapu_lab.output import atomic_write

logger = logging.getLogger(__name__)

Mode = Literal["train", "eval"]

GROUPS = ("encoder", "classifier", "imputer", "evidential")
CHECKPOINT_MAGIC = b"MDL1"


@dataclass
class ModelBundle:
    """Parameters and normalization statistics of f, g, j and u.

    ``params`` maps dotted names (``"encoder.conv0.weight"``) to tensors in a
    fixed order: encoder blocks, classifier, imputer, evidential head.
    """

    in_channels: int
    num_classes: int
    widths: tuple[int, ...] = DEFAULT_WIDTHS
    kernel_size: int = DEFAULT_KERNEL_SIZE
    hidden: int = DEFAULT_HIDDEN
    params: dict[str, Tensor] = field(default_factory=dict)
    bn_stats: list[BatchNormStats] = field(default_factory=list)
    frozen: set[str] = field(default_factory=set)
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def feature_dim(self) -> int:
        return self.widths[-1]

    def group(self, name: str) -> dict[str, Tensor]:
        if name not in GROUPS:
            raise KeyError(f"unknown parameter group {name!r}")
        prefix = f"{name}."
        return {k: v for k, v in self.params.items() if k.startswith(prefix)}

    def set_trainable(self, name: str, trainable: bool) -> None:
        for tensor in self.group(name).values():
            tensor.set_requires_grad(trainable)
        if trainable:
            self.frozen.discard(name)
        else:
            self.frozen.add(name)

    @contextmanager
    def frozen_groups(self, *names: str) -> Generator[ModelBundle, None, None]:
        """Freeze ``names`` and thaw the rest for the duration of the block."""
        previous = set(self.frozen)
        for group in GROUPS:
            self.set_trainable(group, group not in names)
        try:
            yield self
        finally:
            for group in GROUPS:
                self.set_trainable(group, group not in previous)

    def trainable_params(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.params.items() if v.requires_grad}

    def zero_grad(self) -> None:
        for tensor in self.params.values():
            tensor.zero_grad()

    def group_bytes(self, name: str) -> bytes:
        """Little-endian float64 bytes of every tensor in a group, in order."""
        return b"".join(t.data.astype("<f8").tobytes() for t in self.group(name).values())

    def state_items(self) -> Iterator[tuple[str, np.ndarray]]:
        """Every array a checkpoint stores: parameters then running statistics."""
        for name, tensor in self.params.items():
            yield name, tensor.data
        for i, stats in enumerate(self.bn_stats):
            yield f"encoder.bn{i}.running_mean", stats.mean
            yield f"encoder.bn{i}.running_var", stats.var


def _he_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_bundle(
    in_channels: int,
    num_classes: int,
    seed: int,
    *,
    widths: tuple[int, ...] = DEFAULT_WIDTHS,
    kernel_size: int = DEFAULT_KERNEL_SIZE,
    hidden: int = DEFAULT_HIDDEN,
) -> ModelBundle:
    """He-uniform weights, zero biases, unit batchnorm scale; deterministic in ``seed``."""
    if num_classes < 2:
        raise ShapeError(f"need at least 2 classes, got {num_classes}")
    if in_channels < 1:
        raise ShapeError(f"need at least 1 input channel, got {in_channels}")
    rng = np.random.default_rng(seed)
    params: dict[str, Tensor] = {}

    def add(name: str, value: np.ndarray) -> None:
        params[name] = Tensor(value, requires_grad=True, name=name)

    c_prev = in_channels
    for i, width in enumerate(widths):
        add(f"encoder.conv{i}.weight", _he_uniform(rng, (width, c_prev, kernel_size), c_prev * kernel_size))
        add(f"encoder.conv{i}.bias", np.zeros(width))
        add(f"encoder.bn{i}.gamma", np.ones(width))
        add(f"encoder.bn{i}.beta", np.zeros(width))
        c_prev = width
    feat = widths[-1]
    add("classifier.weight", _he_uniform(rng, (feat, num_classes), feat))
    add("classifier.bias", np.zeros(num_classes))
    add("imputer.w_ih", _he_uniform(rng, (feat, hidden), feat))
    add("imputer.w_hh", _he_uniform(rng, (hidden, hidden), hidden))
    add("imputer.bias", np.zeros(hidden))
    add("imputer.readout.weight", _he_uniform(rng, (hidden, feat), hidden))
    add("imputer.readout.bias", np.zeros(feat))
    add("evidential.weight", _he_uniform(rng, (feat, num_classes), feat))
    add("evidential.bias", np.zeros(num_classes))

    return ModelBundle(
        in_channels=in_channels,
        num_classes=num_classes,
        widths=tuple(widths),
        kernel_size=kernel_size,
        hidden=hidden,
        params=params,
        bn_stats=[BatchNormStats.fresh(w) for w in widths],
        meta={"seed": seed, "pretrained": False},
    )


def same_padding(kernel_size: int) -> tuple[int, int]:
    """(left, right) zero padding that keeps the length at stride 1."""
    total = kernel_size - 1
    return total // 2, total - total // 2


def encode(
    bundle: ModelBundle,
    x: Tensor,
    mode: Mode = "train",
    *,
    momentum: float = 0.1,
    eps: float = 1e-5,
    update_running: bool = True,
) -> Tensor:
    """f: signals [B,Cin,L] -> feature sequence [B,F,L]."""
    if x.data.ndim != 3 or x.shape[1] != bundle.in_channels:
        raise ShapeError(f"encoder expects [B,{bundle.in_channels},L], got {x.shape}")
    p = bundle.params
    pad = same_padding(bundle.kernel_size)
    h = x
    for i, stats in enumerate(bundle.bn_stats):
        h = ops.conv1d(h, p[f"encoder.conv{i}.weight"], p[f"encoder.conv{i}.bias"], stride=1, pad=pad)
        h = ops.batchnorm(
            h,
            p[f"encoder.bn{i}.gamma"],
            p[f"encoder.bn{i}.beta"],
            stats,
            mode=mode,
            momentum=momentum,
            eps=eps,
            update_running=update_running,
        )
        h = ops.relu(h)
    return h


def pool(features: Tensor) -> Tensor:
    """Time average: [B,F,T] -> [B,F]."""
    return ops.mean(features, axis=2)


def classify(bundle: ModelBundle, pooled: Tensor) -> Tensor:
    """g: pooled features -> class logits [B,K]."""
    return ops.dense(pooled, bundle.params["classifier.weight"], bundle.params["classifier.bias"])


def impute(bundle: ModelBundle, masked_features: Tensor) -> Tensor:
    """j: features of a masked signal [B,F,T] -> imputed features [B,F,T]."""
    if masked_features.data.ndim != 3 or masked_features.shape[1] != bundle.feature_dim:
        raise ShapeError(f"imputer expects [B,{bundle.feature_dim},T] features, got {masked_features.shape}")
    p = bundle.params
    hidden = ops.rnn_tanh(masked_features, p["imputer.w_ih"], p["imputer.w_hh"], p["imputer.bias"])
    return ops.time_dense(hidden, p["imputer.readout.weight"], p["imputer.readout.bias"])


def evidential_logits(bundle: ModelBundle, pooled: Tensor) -> Tensor:
    """u: pooled features -> evidence logits [B,K]."""
    return ops.dense(pooled, bundle.params["evidential.weight"], bundle.params["evidential.bias"])


# ── Checkpoints ──────────────────────────────────────────────────────────


def _header(bundle: ModelBundle) -> dict[str, Any]:
    return {
        "architecture": {
            "in_channels": bundle.in_channels,
            "num_classes": bundle.num_classes,
            "widths": list(bundle.widths),
            "kernel_size": bundle.kernel_size,
            "hidden": bundle.hidden,
        },
        "meta": bundle.meta,
        "params": [{"name": name, "shape": list(arr.shape)} for name, arr in bundle.state_items()],
    }


def checkpoint_bytes(bundle: ModelBundle) -> bytes:
    header = json.dumps(_header(bundle), sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = b"".join(np.ascontiguousarray(arr, dtype="<f8").tobytes() for _, arr in bundle.state_items())
    return CHECKPOINT_MAGIC + struct.pack("<Q", len(header)) + header + body


def save_checkpoint(bundle: ModelBundle, path: Path) -> None:
    atomic_write(path, checkpoint_bytes(bundle))
    logger.debug("Wrote checkpoint %s", path)


class _Architecture(BaseModel):
    model_config = ConfigDict(extra="forbid")

    in_channels: int = Field(ge=1)
    num_classes: int = Field(ge=2)
    widths: tuple[int, ...] = Field(min_length=1)
    kernel_size: int = Field(ge=1)
    hidden: int = Field(ge=1)


class _ArrayEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    shape: tuple[int, ...]


class _CheckpointHeader(BaseModel):
    model_config = ConfigDict(extra="forbid")

    architecture: _Architecture
    meta: dict[str, Any] = Field(default_factory=dict)
    params: list[_ArrayEntry]


def load_checkpoint(path: Path) -> ModelBundle:
    raw = path.read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise DataFormatError(f"{path}: not a checkpoint (bad magic {raw[:4]!r})")
    if len(raw) < 12:
        raise DataFormatError(f"{path}: truncated checkpoint header")
    (header_len,) = struct.unpack("<Q", raw[4:12])
    try:
        header = _CheckpointHeader.model_validate_json(raw[12 : 12 + header_len])
    except ValidationError as e:
        raise DataFormatError(f"{path}: malformed checkpoint header: {e.error_count()} error(s)") from e

    arch = header.architecture
    bundle = init_bundle(
        arch.in_channels,
        arch.num_classes,
        seed=0,
        widths=arch.widths,
        kernel_size=arch.kernel_size,
        hidden=arch.hidden,
    )
    bundle.meta = dict(header.meta)
    targets = dict(bundle.state_items())

    if len(header.params) != len(targets):
        raise DataFormatError(f"{path}: expected {len(targets)} arrays, header lists {len(header.params)}")

    offset = 12 + header_len
    for entry in header.params:
        name, shape = entry.name, entry.shape
        if name not in targets or targets[name].shape != shape:
            raise DataFormatError(f"{path}: unexpected array {name} with shape {shape}")
        count = int(np.prod(shape))
        end = offset + 8 * count
        if end > len(raw):
            raise DataFormatError(f"{path}: truncated at {name}")
        targets[name][...] = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape)
        offset = end
    if offset != len(raw):
        raise DataFormatError(f"{path}: {len(raw) - offset} trailing bytes")
    return bundle
