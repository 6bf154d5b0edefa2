"""Pretraining, adaptation and evaluation loops."""

from mapu_lab.training.adapt import adapt_emapu, adapt_mapu
from mapu_lab.training.evaluate import Evaluation, Predictions, evaluate, feature_frame, predict
from mapu_lab.training.optim import AdamState, adam_step
from mapu_lab.training.pretrain import pretrain
from mapu_lab.training.report import RunReport

__all__ = [
    "AdamState",
    "Evaluation",
    "Predictions",
    "RunReport",
    "adam_step",
    "adapt_emapu",
    "adapt_mapu",
    "evaluate",
    "feature_frame",
    "predict",
    "pretrain",
]
