"""Dirichlet evidence and the evidential objectives.

Evidence is softplus of the head's logits; alpha = evidence + 1 parametrizes
a Dirichlet over class probabilities. From it follow the strength S, the
belief masses b = e/S, the uncertainty u = K/S and the expected
probabilities p = alpha/S, with u + sum(b) = 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike

from mapu_lab.diffmath import Tensor, ops, special
from mapu_lab.errors import DomainError, ShapeError
from mapu_lab.losses import check_probability_rows, one_hot, row_entropy


LAMBDA_WARMUP_EPOCHS = 10
_ALPHA_TOLERANCE = 1e-12


@dataclass(frozen=True)
class DirichletOutcome:
    evidence: Tensor
    alpha: Tensor
    strength: Tensor
    belief: Tensor
    uncertainty: Tensor
    probs: Tensor

    @property
    def num_classes(self) -> int:
        return self.alpha.shape[1]


@dataclass(frozen=True)
class ScheduleState:
    """Epoch counter for the KL annealing weight (t is 0-based)."""

    t: int = 0

    @property
    def lam(self) -> float:
        return lambda_schedule(self.t)

    def advance(self) -> ScheduleState:
        return ScheduleState(self.t + 1)


def lambda_schedule(t: int) -> float:
    """min(t / 10, 1)."""
    if t < 0:
        raise DomainError(f"schedule step must be non-negative, got {t}")
    return min(t / LAMBDA_WARMUP_EPOCHS, 1.0)


def dirichlet_from_evidence(evidence: Tensor) -> DirichletOutcome:
    if evidence.data.ndim != 2:
        raise ShapeError(f"expected [B,K] evidence, got {evidence.shape}")
    if np.any(evidence.data < 0.0):
        raise DomainError("evidence must be non-negative")
    num_classes = evidence.shape[1]
    alpha = ops.add(evidence, 1.0)
    strength = ops.sum(alpha, axis=1, keepdims=True)
    return DirichletOutcome(
        evidence=evidence,
        alpha=alpha,
        strength=strength,
        belief=ops.div(evidence, strength),
        uncertainty=ops.div(float(num_classes), strength),
        probs=ops.div(alpha, strength),
    )


def dirichlet_stats(logits: Tensor) -> DirichletOutcome:
    """Softplus evidence from logits, then the full Dirichlet summary."""
    return dirichlet_from_evidence(ops.softplus(logits))


def _check_alpha(alpha: Tensor, name: str) -> None:
    if alpha.data.ndim != 2:
        raise ShapeError(f"{name} expects [B,K] concentrations, got {alpha.shape}")
    if np.any(alpha.data < 1.0 - _ALPHA_TOLERANCE):
        raise DomainError(f"{name}: concentrations must be >= 1, got min {alpha.data.min()!r}")


def _as_one_hot(y: Tensor | ArrayLike, shape: tuple[int, ...]) -> Tensor:
    t = y if isinstance(y, Tensor) else Tensor(y)
    if t.shape != shape:
        raise ShapeError(f"one-hot targets {t.shape} do not match {shape}")
    rows_ok = np.all((t.data == 0.0) | (t.data == 1.0)) and np.all(t.data.sum(axis=1) == 1.0)
    if not rows_ok:
        raise DomainError("targets must be one-hot rows")
    return t


def evd_ce(alpha: Tensor, labels_onehot: Tensor | ArrayLike) -> Tensor:
    """Batch mean of sum_k y_k (digamma(S) - digamma(alpha_k))."""
    _check_alpha(alpha, "evd_ce")
    y = _as_one_hot(labels_onehot, alpha.shape)
    strength = ops.sum(alpha, axis=1, keepdims=True)
    per_class = ops.sub(ops.digamma(strength), ops.digamma(alpha))
    return ops.mean(ops.sum(ops.mul(y, per_class), axis=1))


def kl_to_uniform(alpha_tilde: Tensor) -> Tensor:
    """Batch mean of KL[Dir(alpha_tilde) || Dir(1, ..., 1)] in closed form."""
    _check_alpha(alpha_tilde, "kl_to_uniform")
    num_classes = alpha_tilde.shape[1]
    strength = ops.sum(alpha_tilde, axis=1, keepdims=True)
    log_norm = ops.sub(
        ops.sub(ops.sum(ops.lgamma(strength), axis=1), special.lgamma(float(num_classes))),
        ops.sum(ops.lgamma(alpha_tilde), axis=1),
    )
    spread = ops.sum(
        ops.mul(ops.sub(alpha_tilde, 1.0), ops.sub(ops.digamma(alpha_tilde), ops.digamma(strength))),
        axis=1,
    )
    return ops.mean(ops.add(log_norm, spread))


def adjust_alpha(alpha: Tensor, y_onehot: Tensor | ArrayLike) -> Tensor:
    """Set the true-class concentration to 1, keeping the misleading evidence."""
    y = _as_one_hot(y_onehot, alpha.shape)
    return ops.add(y, ops.mul(ops.sub(1.0, y), alpha))


def evd_entropy(probs: Tensor, *, literal: bool = False) -> Tensor:
    """Mean per-sample entropy of the Dirichlet probabilities.

    With ``literal`` the sign flips to mean sum p log p.
    """
    check_probability_rows(probs, "evd_entropy")
    mean_entropy = ops.mean(row_entropy(probs))
    return ops.neg(mean_entropy) if literal else mean_entropy


def evd_diversity(probs: Tensor, *, literal: bool = False) -> Tensor:
    """Negative entropy of the batch-mean probabilities.

    With ``literal`` this is the mean per-sample entropy instead.
    """
    check_probability_rows(probs, "evd_diversity")
    if literal:
        return ops.mean(row_entropy(probs))
    marginal = ops.mean(probs, axis=0, keepdims=True)
    return ops.neg(ops.sum(row_entropy(marginal)))


def evd_selfsup(alpha: Tensor, lam: float) -> Tensor:
    """Evidential CE plus lam * KL against detached argmax pseudo-labels."""
    _check_alpha(alpha, "evd_selfsup")
    # np.argmax returns the first maximum, so ties go to the lowest class index
    pseudo = np.argmax(alpha.data / alpha.data.sum(axis=1, keepdims=True), axis=1)
    y = Tensor(one_hot(pseudo, alpha.shape[1]))
    loss = evd_ce(alpha, y)
    if lam == 0.0:
        return loss
    return ops.add(loss, ops.mul(lam, kl_to_uniform(adjust_alpha(alpha, y))))


def evd_adaptation_loss(
    outcome: DirichletOutcome,
    gamma1: float,
    gamma2: float,
    gamma3: float,
    lam: float,
    *,
    literal: bool = False,
) -> Tensor:
    """gamma1 * entropy + gamma2 * diversity + gamma3 * self-supervision."""
    for label, weight in (("gamma1", gamma1), ("gamma2", gamma2), ("gamma3", gamma3)):
        if weight < 0.0:
            raise DomainError(f"{label} must be non-negative, got {weight}")
    terms: list[Tensor] = []
    if gamma1:
        terms.append(ops.mul(gamma1, evd_entropy(outcome.probs, literal=literal)))
    if gamma2:
        terms.append(ops.mul(gamma2, evd_diversity(outcome.probs, literal=literal)))
    if gamma3:
        terms.append(ops.mul(gamma3, evd_selfsup(outcome.alpha, lam)))
    if not terms:
        return ops.mul(0.0, ops.sum(outcome.probs))
    total = terms[0]
    for term in terms[1:]:
        total = ops.add(total, term)
    return total
