"""Classical training objectives: smoothed cross-entropy, imputation MSE, infomax."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from mapu_lab._defaults import DEFAULT_LABEL_SMOOTHING
from mapu_lab.diffmath import Tensor, ops
from mapu_lab.errors import DomainError, ShapeError

PROB_FLOOR = 1e-12
ROW_SUM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class SmoothingConfig:
    """Label smoothing coefficient eta in [0, 1)."""

    eta: float = DEFAULT_LABEL_SMOOTHING

    def __post_init__(self) -> None:
        if not 0.0 <= self.eta < 1.0:
            raise DomainError(f"smoothing coefficient must be in [0, 1), got {self.eta}")

    def targets(self, labels: NDArray[np.int64], num_classes: int) -> NDArray[np.float64]:
        """(1 - eta) * onehot + eta / K, one row per label."""
        return (1.0 - self.eta) * one_hot(labels, num_classes) + self.eta / num_classes


def one_hot(labels: ArrayLike, num_classes: int) -> NDArray[np.float64]:
    idx = np.asarray(labels, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError(f"labels must be 1-d, got shape {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= num_classes):
        raise DomainError(f"labels must lie in [0, {num_classes}), got range [{idx.min()}, {idx.max()}]")
    out = np.zeros((idx.size, num_classes))
    out[np.arange(idx.size), idx] = 1.0
    return out


def check_probability_rows(probs: Tensor, name: str) -> None:
    if probs.data.ndim != 2:
        raise ShapeError(f"{name} expects [B,K] probabilities, got {probs.shape}")
    drift = np.abs(probs.data.sum(axis=1) - 1.0)
    if np.any(drift > ROW_SUM_TOLERANCE) or np.any(probs.data < 0.0):
        raise DomainError(f"{name}: rows are not probability vectors (max drift {drift.max():.2e})")


def row_entropy(probs: Tensor) -> Tensor:
    """Natural-log Shannon entropy per row, with 0 log 0 taken as 0."""
    return ops.neg(ops.sum(ops.mul(probs, ops.log(ops.clip_min(probs, PROB_FLOOR))), axis=-1))


def smoothed_ce(logits: Tensor, labels: ArrayLike, eta: float = DEFAULT_LABEL_SMOOTHING) -> Tensor:
    """Cross-entropy against label-smoothed targets, averaged over the batch."""
    if logits.data.ndim != 2:
        raise ShapeError(f"smoothed_ce expects [B,K] logits, got {logits.shape}")
    batch, num_classes = logits.shape
    idx = np.asarray(labels, dtype=np.int64)
    if idx.shape != (batch,):
        raise ShapeError(f"{idx.shape[0] if idx.ndim else 0} labels for {batch} rows")
    targets = SmoothingConfig(eta).targets(idx, num_classes)
    return ops.neg(ops.mean(ops.sum(ops.mul(targets, ops.log_softmax(logits)), axis=1)))


def imputation_mse(original: Tensor, imputed: Tensor) -> Tensor:
    """Mean squared difference over every element.

    Gradients flow into both arguments; callers detach whichever side must
    not be trained.
    """
    if original.shape != imputed.shape:
        raise ShapeError(f"imputation_mse: {original.shape} vs {imputed.shape}")
    return ops.mean(ops.square(ops.sub(original, imputed)))


def infomax_loss(probs: Tensor) -> Tensor:
    """Mean per-sample entropy minus the entropy of the batch-mean prediction."""
    check_probability_rows(probs, "infomax_loss")
    marginal = ops.mean(probs, axis=0, keepdims=True)
    return ops.sub(ops.mean(row_entropy(probs)), ops.sum(row_entropy(marginal)))
