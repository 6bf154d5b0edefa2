"""Evaluation metrics: macro-F1, accuracy, calibration and entropy summaries.

Calibration bins are equal-width on the top-class confidence; a confidence
c falls into bin ceil(c * bins) - 1 (so 1.0 lands in the last bin and 0.8
with ten bins in [0.7, 0.8]). Brier uses the multiclass convention
sum_k (p_k - y_k)^2 averaged over samples, with range [0, 2].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray
from sklearn.metrics import accuracy_score, f1_score

from mapu_lab._defaults import DEFAULT_CALIBRATION_BINS, DEFAULT_HISTOGRAM_BINS
from mapu_lab.errors import DomainError, ShapeError

ROW_SUM_TOLERANCE = 1e-6
PROB_FLOOR = 1e-12


def _labels(values: ArrayLike, name: str, num_classes: int | None = None) -> NDArray[np.int64]:
    arr = np.asarray(values, dtype=np.int64)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-d, got shape {arr.shape}")
    if arr.size == 0:
        raise DomainError(f"{name} is empty")
    if num_classes is not None and (arr.min() < 0 or arr.max() >= num_classes):
        raise DomainError(f"{name} must lie in [0, {num_classes})")
    return arr


def _probs(values: ArrayLike, name: str) -> NDArray[np.float64]:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ShapeError(f"{name} must be a non-empty [n, K] array, got shape {arr.shape}")
    if np.any(arr < 0.0) or np.any(np.abs(arr.sum(axis=1) - 1.0) > ROW_SUM_TOLERANCE):
        raise DomainError(f"{name}: rows are not probability vectors")
    return arr


def macro_f1(pred: ArrayLike, truth: ArrayLike, num_classes: int | None = None) -> float:
    """Unweighted mean of per-class F1 over every class seen in truth or predictions."""
    p = _labels(pred, "pred", num_classes)
    t = _labels(truth, "truth", num_classes)
    if p.shape != t.shape:
        raise ShapeError(f"{p.size} predictions for {t.size} labels")
    present = np.union1d(t, p)
    return float(f1_score(t, p, labels=present, average="macro", zero_division=0))


def accuracy(pred: ArrayLike, truth: ArrayLike) -> float:
    p = _labels(pred, "pred")
    t = _labels(truth, "truth")
    if p.shape != t.shape:
        raise ShapeError(f"{p.size} predictions for {t.size} labels")
    return float(accuracy_score(t, p))


@dataclass
class CalibrationReport:
    edges: NDArray[np.float64]
    counts: NDArray[np.int64]
    confidence: NDArray[np.float64]
    accuracy: NDArray[np.float64]
    ece: float
    mce: float
    brier: float

    def to_frame(self) -> pd.DataFrame:
        """One row per bin; empty bins report zero confidence and accuracy."""
        return pd.DataFrame(
            {
                "bin_lower": self.edges[:-1],
                "bin_upper": self.edges[1:],
                "count": self.counts,
                "confidence": self.confidence,
                "accuracy": self.accuracy,
            }
        )

    def summary(self) -> dict[str, Any]:
        return {
            "ece": self.ece,
            "mce": self.mce,
            "brier": self.brier,
            "bins": len(self.counts),
            "brier_convention": "sum over classes, mean over samples",
        }


def calibration(probs: ArrayLike, truth: ArrayLike, bins: int = DEFAULT_CALIBRATION_BINS) -> CalibrationReport:
    if bins < 2:
        raise DomainError(f"need at least 2 bins, got {bins}")
    p = _probs(probs, "probs")
    t = _labels(truth, "truth", p.shape[1])
    if t.shape[0] != p.shape[0]:
        raise ShapeError(f"{t.size} labels for {p.shape[0]} probability rows")

    conf = p.max(axis=1)
    correct = (p.argmax(axis=1) == t).astype(np.float64)
    idx = np.clip(np.ceil(conf * bins).astype(np.int64) - 1, 0, bins - 1)
    counts = np.bincount(idx, minlength=bins)
    safe = np.maximum(counts, 1)
    mean_conf = np.bincount(idx, weights=conf, minlength=bins) / safe
    mean_acc = np.bincount(idx, weights=correct, minlength=bins) / safe
    gaps = np.abs(mean_acc - mean_conf)
    filled = counts > 0

    onehot = np.zeros_like(p)
    onehot[np.arange(t.size), t] = 1.0
    return CalibrationReport(
        edges=np.linspace(0.0, 1.0, bins + 1),
        counts=counts,
        confidence=mean_conf,
        accuracy=mean_acc,
        ece=float(np.sum(counts / t.size * gaps)),
        mce=float(gaps[filled].max()),
        brier=float(np.mean(np.sum((p - onehot) ** 2, axis=1))),
    )


def entropies(probs: ArrayLike) -> NDArray[np.float64]:
    """Natural-log Shannon entropy per row."""
    p = _probs(probs, "probs")
    return -np.sum(p * np.log(np.maximum(p, PROB_FLOOR)), axis=1)


@dataclass
class EntropyStats:
    values: NDArray[np.float64]
    histogram: NDArray[np.int64]

    @property
    def mean(self) -> float:
        return float(self.values.mean())

    @property
    def median(self) -> float:
        return float(np.median(self.values))


@dataclass
class EntropySummary:
    """Entropy distributions of the softmax and evidential views of one dataset."""

    edges: NDArray[np.float64]
    views: dict[str, EntropyStats] = field(default_factory=dict)

    def summary(self) -> dict[str, Any]:
        return {name: {"mean": s.mean, "median": s.median} for name, s in self.views.items()}

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"bin_lower": self.edges[:-1], "bin_upper": self.edges[1:]})
        for name, stats in self.views.items():
            frame[name] = stats.histogram
        return frame


def entropy_summary(
    softmax_probs: ArrayLike,
    evd_probs: ArrayLike,
    bins: int = DEFAULT_HISTOGRAM_BINS,
) -> EntropySummary:
    """Entropy statistics and histograms over [0, ln K] for both views."""
    soft = _probs(softmax_probs, "softmax_probs")
    evd = _probs(evd_probs, "evd_probs")
    if soft.shape != evd.shape:
        raise ShapeError(f"softmax {soft.shape} and evidential {evd.shape} probabilities differ in shape")
    edges = np.linspace(0.0, np.log(soft.shape[1]), bins + 1)
    views: dict[str, EntropyStats] = {}
    for name, p in (("softmax", soft), ("evidential", evd)):
        values = entropies(p)
        # clip so rounding just above ln K still lands in the last bin
        hist, _ = np.histogram(np.clip(values, 0.0, edges[-1]), bins=edges)
        views[name] = EntropyStats(values=values, histogram=hist.astype(np.int64))
    return EntropySummary(edges=edges, views=views)
