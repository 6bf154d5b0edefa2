"""Experiment configuration: --set overrides -> --seed -> config file -> defaults.

The config file is JSON. Its path comes from ``--config`` or the
``MAPU_CONFIG`` environment variable. Every section rejects unknown keys.
"""

from __future__ import annotations

import json
import logging
import os
from pathlib import Path
from typing import Any, Literal

from pydantic import AliasChoices, BaseModel, ConfigDict, Field, ValidationError, model_validator

from mapu_lab._defaults import (
    DEFAULT_BATCH_SIZE,
    DEFAULT_CALIBRATION_BINS,
    DEFAULT_CHANNELS,
    DEFAULT_CLASSES,
    DEFAULT_EPOCHS,
    DEFAULT_HIDDEN,
    DEFAULT_HISTOGRAM_BINS,
    DEFAULT_KERNEL_SIZE,
    DEFAULT_LABEL_SMOOTHING,
    DEFAULT_LENGTH,
    DEFAULT_LOSS_WEIGHT,
    DEFAULT_LR,
    DEFAULT_SAMPLES,
    DEFAULT_SEEDS,
    DEFAULT_SHIFT,
    DEFAULT_TRAIN_FRACTION,
    DEFAULT_WIDTHS,
)
from mapu_lab.data import ClassArchetype, ShiftParams, default_archetypes
from mapu_lab.errors import SchemaError
from mapu_lab.masking import MaskSpec

logger = logging.getLogger(__name__)

CONFIG_ENV = "MAPU_CONFIG"

Variant = Literal["mapu", "emapu"]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DataConfig(_Section):
    n: int = Field(default=DEFAULT_SAMPLES, ge=2)
    train_fraction: float = Field(default=DEFAULT_TRAIN_FRACTION, gt=0.0, lt=1.0)
    shift: float = Field(default=DEFAULT_SHIFT, ge=0.0, le=1.0)
    archetypes: list[ClassArchetype] = Field(default_factory=default_archetypes, min_length=2)
    source_shift: ShiftParams = Field(default_factory=ShiftParams)
    target_shift: ShiftParams | None = None

    def resolved_target_shift(self) -> ShiftParams:
        """Explicit target shift, or the one the knob interpolates to."""
        if self.target_shift is not None:
            return self.target_shift
        return ShiftParams.from_knob(self.shift, phase_jitter=self.source_shift.phase_jitter)


class ModelConfig(_Section):
    in_channels: int = Field(default=DEFAULT_CHANNELS, ge=1)
    num_classes: int = Field(default=DEFAULT_CLASSES, ge=2)
    length: int = Field(default=DEFAULT_LENGTH, ge=2)
    widths: tuple[int, ...] = Field(default=DEFAULT_WIDTHS, min_length=1)
    kernel_size: int = Field(default=DEFAULT_KERNEL_SIZE, ge=1)
    hidden: int = Field(default=DEFAULT_HIDDEN, ge=1)


class TrainConfig(_Section):
    """One training phase (pretraining or adaptation)."""

    epochs: int = Field(default=DEFAULT_EPOCHS, ge=0)
    batch_size: int = Field(default=DEFAULT_BATCH_SIZE, ge=2)
    lr: float = Field(default=DEFAULT_LR, gt=0.0)
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = Field(default=1e-8, gt=0.0)
    seed: int = Field(default=0, ge=0)
    variant: Variant = "mapu"
    gamma1: float = Field(default=DEFAULT_LOSS_WEIGHT, ge=0.0)
    gamma2: float = Field(default=DEFAULT_LOSS_WEIGHT, ge=0.0)
    gamma3: float = Field(default=DEFAULT_LOSS_WEIGHT, ge=0.0)
    beta_imp: float = Field(default=DEFAULT_LOSS_WEIGHT, ge=0.0)
    mask: MaskSpec = Field(default_factory=MaskSpec)
    label_smoothing: float = Field(default=DEFAULT_LABEL_SMOOTHING, ge=0.0, lt=1.0)
    imputation_weight: float = Field(default=1.0, ge=0.0)
    bn_momentum: float = Field(default=0.1, gt=0.0, le=1.0)
    bn_eps: float = Field(default=1e-5, gt=0.0)
    bn_update_during_adapt: bool = True
    lambda_adapt_schedule: bool = True
    literal_entropy_terms: bool = Field(
        default=False, validation_alias=AliasChoices("literal_entropy_terms", "literal_eq16_17")
    )


class EvalConfig(_Section):
    bins: int = Field(default=DEFAULT_CALIBRATION_BINS, ge=2)
    histogram_bins: int = Field(default=DEFAULT_HISTOGRAM_BINS, ge=1)
    export_features: bool = False


class ExperimentConfig(_Section):
    data: DataConfig = Field(default_factory=DataConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    pretrain: TrainConfig = Field(default_factory=TrainConfig)
    adapt: TrainConfig = Field(default_factory=TrainConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    seeds: list[int] = Field(default_factory=lambda: list(DEFAULT_SEEDS), min_length=1)

    @model_validator(mode="after")
    def _check_consistency(self) -> ExperimentConfig:
        if self.model.num_classes > len(self.data.archetypes):
            raise ValueError(
                f"model.num_classes={self.model.num_classes} exceeds {len(self.data.archetypes)} data.archetypes"
            )
        if any(s < 0 for s in self.seeds):
            raise ValueError("seeds must be non-negative")
        for phase in (self.pretrain, self.adapt):
            if self.model.length < phase.mask.n_blocks:
                raise ValueError(f"mask.n_blocks={phase.mask.n_blocks} exceeds model.length={self.model.length}")
        return self


def _load_json(path: Path) -> dict[str, Any]:
    """Load a JSON config file; a missing file is an I/O error, bad JSON a schema error."""
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path}: invalid JSON ({e.msg} at line {e.lineno})") from None
    if not isinstance(data, dict):
        raise SchemaError(f"{path}: top level must be an object")
    return data


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_override(data: dict[str, Any], assignment: str) -> None:
    """Apply ``a.b.c=value`` to nested dicts in place; the value is JSON or a bare string."""
    key, sep, raw = assignment.partition("=")
    if not sep or not key.strip():
        raise SchemaError(f"override {assignment!r} is not KEY=VALUE")
    parts = key.strip().split(".")
    node = data
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise SchemaError(f"override {key!r}: {part!r} is not a section")
        node = child
    node[parts[-1]] = _parse_value(raw)


def resolve_config(
    *,
    config_path: Path | None = None,
    overrides: list[str] | None = None,
    seed: int | None = None,
) -> ExperimentConfig:
    """Resolve configuration from all sources.

    Resolution order: --set overrides -> --seed -> config file -> defaults.
    """
    path = config_path
    if path is None and os.getenv(CONFIG_ENV):
        path = Path(os.environ[CONFIG_ENV])
    data = _load_json(path) if path is not None else {}
    if path is not None:
        logger.info("Loaded config %s", path)

    if seed is not None:
        data["seeds"] = [seed]
    for assignment in overrides or []:
        apply_override(data, assignment)

    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise SchemaError(f"invalid configuration: {e}") from None
