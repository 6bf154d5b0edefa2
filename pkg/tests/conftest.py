"""Shared test fixtures."""

from __future__ import annotations

import re
from typing import Any

import pytest

from mapu_lab.config import ExperimentConfig
from mapu_lab.data import Dataset
from mapu_lab.experiment import DomainSplits, build_bundle, build_domains
from mapu_lab.nets import ModelBundle

# Small enough for a full pretrain/adapt cycle in well under a second.
TINY: dict[str, Any] = {
    "data": {"n": 48, "train_fraction": 0.75},
    "model": {"in_channels": 2, "num_classes": 3, "length": 32, "widths": [4, 6], "kernel_size": 4, "hidden": 5},
    "pretrain": {"epochs": 2, "batch_size": 12, "mask": {"ratio": 0.25, "n_blocks": 4}},
    "adapt": {"epochs": 2, "batch_size": 12, "mask": {"ratio": 0.25, "n_blocks": 4}},
    "eval": {"bins": 5, "histogram_bins": 4},
    "seeds": [3],
}


def strip_ansi(text: str) -> str:
    """Remove ANSI escape codes from text."""
    return re.sub(r"\x1b\[[0-9;]*m", "", text)


@pytest.fixture
def tiny_config() -> ExperimentConfig:
    return ExperimentConfig.model_validate(TINY)


@pytest.fixture
def tiny_splits(tiny_config: ExperimentConfig) -> DomainSplits:
    return build_domains(tiny_config, 3)


@pytest.fixture
def source(tiny_splits: DomainSplits) -> Dataset:
    return tiny_splits.source_train


@pytest.fixture
def target(tiny_splits: DomainSplits) -> Dataset:
    return tiny_splits.target_train


@pytest.fixture
def bundle(tiny_config: ExperimentConfig) -> ModelBundle:
    return build_bundle(tiny_config.model, 3)
