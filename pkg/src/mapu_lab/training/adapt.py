"""Target adaptation without source data.

Only the encoder moves. Every head is frozen: the classifier keeps the
source decision boundary and the imputer, trained on source, pulls target
features toward ones it can reconstruct from their masked version. For
``emapu`` the evidential head is frozen too and supplies the uncertainty
objectives.
"""

from __future__ import annotations

import logging
import time
from collections import defaultdict
from collections.abc import Callable

import numpy as np

from mapu_lab.config import TrainConfig
from mapu_lab.data import Dataset
from mapu_lab.diffmath import Tape, Tensor, backward, no_grad, ops
from mapu_lab.errors import NumericalError, ShapeError
from mapu_lab.evidential import dirichlet_stats, evd_adaptation_loss, lambda_schedule
from mapu_lab.losses import imputation_mse, infomax_loss, row_entropy
from mapu_lab.masking import MaskSpec, temporal_mask
from mapu_lab.nets import ModelBundle, classify, encode, evidential_logits, impute, pool
from mapu_lab.training.batches import MIN_BATCH, iter_batches
from mapu_lab.training.evaluate import quick_accuracy
from mapu_lab.training.optim import AdamState, adam_step
from mapu_lab.training.report import RunReport

logger = logging.getLogger(__name__)

HEADS = ("classifier", "imputer", "evidential")

SfdaLoss = Callable[[Tensor], Tensor]
# (bundle, pooled features, epoch) -> named loss terms, the first being the primary objective
Objective = Callable[[ModelBundle, Tensor, int], dict[str, Tensor]]


def _imputation_term(bundle: ModelBundle, feats: Tensor, masked: Tensor, cfg: TrainConfig) -> Tensor:
    """Imputer output on masked-signal features vs clean features, both still on the tape."""
    masked_feats = encode(bundle, masked, "train", momentum=cfg.bn_momentum, eps=cfg.bn_eps, update_running=False)
    return imputation_mse(feats, impute(bundle, masked_feats))


def _run(
    bundle: ModelBundle,
    target: Dataset,
    cfg: TrainConfig,
    variant: str,
    objective: Objective,
    held_out: Dataset | None,
) -> tuple[ModelBundle, RunReport]:
    if target.channels != bundle.in_channels:
        raise ShapeError(f"target has {target.channels} channels, model expects {bundle.in_channels}")
    report = RunReport(phase="adapt", variant=variant, seed=cfg.seed, config=cfg.model_dump(mode="json"))
    if not bundle.meta.get("pretrained", False):
        logger.warning("Adapting a bundle that was never pretrained")
        report.flag("unpretrained")
    if cfg.epochs == 0:
        return bundle, report
    if target.n < MIN_BATCH:
        raise ShapeError(f"need at least {MIN_BATCH} target samples, got {target.n}")

    mask_spec: MaskSpec = cfg.mask.seeded(cfg.seed)
    state = AdamState()
    started = time.perf_counter()

    with bundle.frozen_groups(*HEADS):
        for epoch in range(cfg.epochs):
            sums: dict[str, float] = defaultdict(float)
            batches = 0
            for b, idx in enumerate(iter_batches(target.n, cfg.batch_size, cfg.seed, epoch)):
                x = target.batch(idx)
                try:
                    with Tape():
                        feats = encode(
                            bundle,
                            Tensor(x),
                            "train",
                            momentum=cfg.bn_momentum,
                            eps=cfg.bn_eps,
                            update_running=cfg.bn_update_during_adapt,
                        )
                        terms = objective(bundle, pool(feats), epoch)
                        total = next(iter(terms.values()))
                        if cfg.beta_imp > 0.0:
                            masked, _ = temporal_mask(x, mask_spec, epoch=epoch, indices=idx)
                            terms["imputation"] = _imputation_term(bundle, feats, masked, cfg)
                            total = ops.add(total, ops.mul(cfg.beta_imp, terms["imputation"]))
                        backward(total)
                    adam_step(bundle.trainable_params(), state, cfg.lr, cfg.betas, cfg.eps)
                except NumericalError as e:
                    raise NumericalError(f"adapt epoch {epoch} batch {b}: {e}") from e
                bundle.zero_grad()
                for name, value in terms.items():
                    sums[name] += value.item()
                if len(terms) > 1:
                    sums["total"] += total.item()
                batches += 1

            report.record(epoch, {name: value / batches for name, value in sums.items()})
            if held_out is not None:
                report.eval_trace.append({"epoch": epoch, "accuracy": quick_accuracy(bundle, held_out)})
            logger.info(
                "adapt[%s] epoch %d/%d %s",
                variant,
                epoch + 1,
                cfg.epochs,
                " ".join(f"{k}={v[-1]:.4f}" for k, v in report.losses.items()),
            )

    bundle.meta["adapted"] = True
    report.wall_seconds = time.perf_counter() - started
    return bundle, report


def adapt_mapu(
    bundle: ModelBundle,
    target: Dataset,
    cfg: TrainConfig,
    *,
    sfda_loss: SfdaLoss = infomax_loss,
    held_out: Dataset | None = None,
) -> tuple[ModelBundle, RunReport]:
    """Minimize ``sfda_loss`` on softmax predictions plus beta * imputation error.

    Target labels are never read (except by the optional ``held_out`` trace).
    """
    name = getattr(sfda_loss, "__name__", "sfda").removesuffix("_loss")

    def objective(b: ModelBundle, pooled: Tensor, epoch: int) -> dict[str, Tensor]:
        return {name: sfda_loss(ops.softmax(classify(b, pooled)))}

    return _run(bundle, target, cfg, "mapu", objective, held_out)


def adapt_emapu(
    bundle: ModelBundle,
    target: Dataset,
    cfg: TrainConfig,
    *,
    held_out: Dataset | None = None,
) -> tuple[ModelBundle, RunReport]:
    """Minimize the evidential adaptation loss plus beta * imputation error.

    Also records ``evd_entropy``, the mean entropy of the Dirichlet
    probabilities per epoch, as a monitoring series.
    """

    def objective(b: ModelBundle, pooled: Tensor, epoch: int) -> dict[str, Tensor]:
        outcome = dirichlet_stats(evidential_logits(b, pooled))
        lam = lambda_schedule(epoch) if cfg.lambda_adapt_schedule else 1.0
        loss = evd_adaptation_loss(outcome, cfg.gamma1, cfg.gamma2, cfg.gamma3, lam, literal=cfg.literal_entropy_terms)
        with no_grad():
            monitor = Tensor(np.mean(row_entropy(outcome.probs.detach()).data))
        return {"evidential": loss, "evd_entropy": monitor}

    return _run(bundle, target, cfg, "emapu", objective, held_out)
