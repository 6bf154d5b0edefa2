"""Eval-mode prediction and metrics assembly."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Literal

import numpy as np
import pandas as pd
from numpy.typing import NDArray

from mapu_lab import metrics
from mapu_lab._defaults import DEFAULT_CALIBRATION_BINS, DEFAULT_HISTOGRAM_BINS
from mapu_lab.data import Dataset
from mapu_lab.diffmath import Tensor, no_grad, ops
from mapu_lab.evidential import dirichlet_stats
from mapu_lab.nets import ModelBundle, classify, encode, evidential_logits, pool

View = Literal["softmax", "evidential"]
VIEWS: tuple[View, ...] = ("softmax", "evidential")
EVAL_BATCH = 256


@dataclass
class Predictions:
    """Both probability views of one dataset plus the pooled features."""

    softmax: NDArray[np.float64]
    evidential: NDArray[np.float64]
    uncertainty: NDArray[np.float64]
    features: NDArray[np.float64]

    def probs(self, view: View) -> NDArray[np.float64]:
        return self.softmax if view == "softmax" else self.evidential

    def labels(self, view: View) -> NDArray[np.int64]:
        return self.probs(view).argmax(axis=1).astype(np.int64)


def primary_view(bundle: ModelBundle) -> View:
    """Evidential checkpoints predict with alpha / S; everything else with softmax."""
    return "evidential" if bundle.meta.get("variant") == "emapu" else "softmax"


def predict(bundle: ModelBundle, ds: Dataset, batch_size: int = EVAL_BATCH) -> Predictions:
    """Run the encoder in eval mode over ``ds`` without recording."""
    soft, evd, unc, feats = [], [], [], []
    with no_grad():
        for start in range(0, ds.n, batch_size):
            idx = np.arange(start, min(start + batch_size, ds.n), dtype=np.int64)
            pooled = pool(encode(bundle, Tensor(ds.batch(idx)), "eval"))
            outcome = dirichlet_stats(evidential_logits(bundle, pooled))
            soft.append(ops.softmax(classify(bundle, pooled)).data)
            evd.append(outcome.probs.data)
            unc.append(outcome.uncertainty.data[:, 0])
            feats.append(pooled.data)
    return Predictions(
        softmax=np.concatenate(soft),
        evidential=np.concatenate(evd),
        uncertainty=np.concatenate(unc),
        features=np.concatenate(feats),
    )


def quick_accuracy(bundle: ModelBundle, ds: Dataset) -> float:
    return metrics.accuracy(predict(bundle, ds).labels(primary_view(bundle)), ds.labels)


@dataclass
class Evaluation:
    predictions: Predictions
    calibration: dict[str, metrics.CalibrationReport]
    entropy: metrics.EntropySummary
    summary: dict[str, Any]


def evaluate(
    bundle: ModelBundle,
    ds: Dataset,
    *,
    bins: int = DEFAULT_CALIBRATION_BINS,
    histogram_bins: int = DEFAULT_HISTOGRAM_BINS,
    view: View | None = None,
) -> Evaluation:
    """Accuracy, macro-F1, calibration and entropy for both views.

    The top-level ``accuracy`` and ``macro_f1`` come from ``view``, which
    defaults to the bundle's own prediction head.
    """
    preds = predict(bundle, ds)
    chosen = view or primary_view(bundle)
    per_view: dict[str, Any] = {}
    calib: dict[str, metrics.CalibrationReport] = {}
    for name in VIEWS:
        labels = preds.labels(name)
        calib[name] = metrics.calibration(preds.probs(name), ds.labels, bins)
        per_view[name] = {
            "accuracy": metrics.accuracy(labels, ds.labels),
            "macro_f1": metrics.macro_f1(labels, ds.labels, ds.num_classes),
            "calibration": calib[name].summary(),
        }
    entropy = metrics.entropy_summary(preds.softmax, preds.evidential, histogram_bins)
    summary = {
        "n": ds.n,
        "view": chosen,
        "accuracy": per_view[chosen]["accuracy"],
        "macro_f1": per_view[chosen]["macro_f1"],
        "views": per_view,
        "entropy": entropy.summary(),
        "mean_uncertainty": float(preds.uncertainty.mean()),
    }
    return Evaluation(predictions=preds, calibration=calib, entropy=entropy, summary=summary)


def feature_frame(preds: Predictions, ds: Dataset, domain: str) -> pd.DataFrame:
    """Pooled encoder features with labels and domain, one row per sample."""
    frame = pd.DataFrame(preds.features, columns=[f"f{i}" for i in range(preds.features.shape[1])])
    frame.insert(0, "domain", domain)
    frame.insert(1, "label", ds.labels)
    frame["uncertainty"] = preds.uncertainty
    return frame
