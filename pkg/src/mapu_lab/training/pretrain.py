"""Source pretraining: classification plus an isolated temporal-imputation task.

Per batch the encoder sees the clean signal and, without recording, the
temporally masked copy. The classifier (and for ``emapu`` the evidential
head) trains on the clean features. The imputer learns to map masked
features to the detached clean ones, so its loss never reaches the encoder.
"""

from __future__ import annotations

import logging
import time
from collections import defaultdict

import numpy as np
from numpy.typing import NDArray

from mapu_lab.config import TrainConfig
from mapu_lab.data import Dataset
from mapu_lab.diffmath import Tape, Tensor, backward, no_grad, ops
from mapu_lab.errors import NumericalError, ShapeError
from mapu_lab.evidential import ScheduleState, adjust_alpha, dirichlet_stats, evd_ce, kl_to_uniform
from mapu_lab.losses import imputation_mse, one_hot, smoothed_ce
from mapu_lab.masking import temporal_mask
from mapu_lab.nets import ModelBundle, classify, encode, evidential_logits, impute, pool
from mapu_lab.training.batches import MIN_BATCH, iter_batches
from mapu_lab.training.evaluate import quick_accuracy
from mapu_lab.training.optim import AdamState, adam_step
from mapu_lab.training.report import RunReport

logger = logging.getLogger(__name__)


def _batch_terms(
    bundle: ModelBundle,
    x: Tensor,
    masked: Tensor,
    labels: NDArray[np.int64],
    cfg: TrainConfig,
    schedule: ScheduleState,
) -> tuple[Tensor, dict[str, Tensor]]:
    feats = encode(bundle, x, "train", momentum=cfg.bn_momentum, eps=cfg.bn_eps)
    pooled = pool(feats)
    terms = {"classification": smoothed_ce(classify(bundle, pooled), labels, cfg.label_smoothing)}
    total = terms["classification"]

    if cfg.variant == "emapu":
        outcome = dirichlet_stats(evidential_logits(bundle, pooled))
        y = one_hot(labels, bundle.num_classes)
        terms["evidential"] = evd_ce(outcome.alpha, y)
        terms["kl"] = kl_to_uniform(adjust_alpha(outcome.alpha, y))
        total = ops.add(total, ops.add(terms["evidential"], ops.mul(schedule.lam, terms["kl"])))

    with no_grad():
        masked_feats = encode(bundle, masked, "train", momentum=cfg.bn_momentum, eps=cfg.bn_eps, update_running=False)
    terms["imputation"] = imputation_mse(feats.detach(), impute(bundle, masked_feats))
    total = ops.add(total, ops.mul(cfg.imputation_weight, terms["imputation"]))
    return total, terms


def pretrain(
    bundle: ModelBundle,
    source: Dataset,
    cfg: TrainConfig,
    *,
    held_out: Dataset | None = None,
) -> tuple[ModelBundle, RunReport]:
    """Train encoder, classifier, imputer (and the evidential head for ``emapu``) in place."""
    if source.num_classes != bundle.num_classes:
        raise ShapeError(f"dataset has {source.num_classes} classes, model expects {bundle.num_classes}")
    report = RunReport(phase="pretrain", variant=cfg.variant, seed=cfg.seed, config=cfg.model_dump(mode="json"))
    if cfg.epochs == 0:
        return bundle, report
    if source.n < MIN_BATCH:
        raise ShapeError(f"need at least {MIN_BATCH} source samples, got {source.n}")

    mask_spec = cfg.mask.seeded(cfg.seed)
    frozen = () if cfg.variant == "emapu" else ("evidential",)
    state = AdamState()
    started = time.perf_counter()
    schedule = ScheduleState()

    with bundle.frozen_groups(*frozen):
        for epoch in range(cfg.epochs):
            sums: dict[str, float] = defaultdict(float)
            batches = 0
            for b, idx in enumerate(iter_batches(source.n, cfg.batch_size, cfg.seed, epoch)):
                x = source.batch(idx)
                masked, _ = temporal_mask(x, mask_spec, epoch=epoch, indices=idx)
                try:
                    with Tape():
                        total, terms = _batch_terms(bundle, Tensor(x), masked, source.labels[idx], cfg, schedule)
                        backward(total)
                    adam_step(bundle.trainable_params(), state, cfg.lr, cfg.betas, cfg.eps)
                except NumericalError as e:
                    raise NumericalError(f"pretrain epoch {epoch} batch {b}: {e}") from e
                bundle.zero_grad()
                for name, value in terms.items():
                    sums[name] += value.item()
                sums["total"] += total.item()
                batches += 1
                logger.debug("pretrain epoch %d batch %d total=%.6f", epoch, b, total.item())

            report.record(epoch, {name: value / batches for name, value in sums.items()})
            if held_out is not None:
                bundle.meta["variant"] = cfg.variant
                report.eval_trace.append({"epoch": epoch, "accuracy": quick_accuracy(bundle, held_out)})
            logger.info(
                "pretrain[%s] epoch %d/%d %s",
                cfg.variant,
                epoch + 1,
                cfg.epochs,
                " ".join(f"{k}={v[-1]:.4f}" for k, v in report.losses.items()),
            )
            schedule = schedule.advance()

    bundle.meta.update({"pretrained": True, "variant": cfg.variant})
    report.wall_seconds = time.perf_counter() - started
    return bundle, report
