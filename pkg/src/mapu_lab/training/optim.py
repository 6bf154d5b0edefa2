"""Adam with bias correction, applied in place to named tensors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from mapu_lab.diffmath import Tensor
from mapu_lab.diffmath.tensor import FloatArray
from mapu_lab.errors import NumericalError


@dataclass
class AdamState:
    """First and second moments plus the step count, per parameter name."""

    m: dict[str, FloatArray] = field(default_factory=dict)
    v: dict[str, FloatArray] = field(default_factory=dict)
    t: dict[str, int] = field(default_factory=dict)


def adam_step(
    params: dict[str, Tensor],
    state: AdamState,
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> None:
    """One update of every parameter that requires gradients.

    Frozen parameters (``requires_grad`` False) are skipped entirely, so
    neither their values nor their moments change.
    """
    b1, b2 = betas
    for name, p in params.items():
        if not p.requires_grad or p.grad is None:
            continue
        if not np.all(np.isfinite(p.grad)):
            raise NumericalError(f"non-finite gradient for {name}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
            state.t[name] = 0
        v = state.v[name]
        state.t[name] += 1
        t = state.t[name]
        m *= b1
        m += (1.0 - b1) * p.grad
        v *= b2
        v += (1.0 - b2) * p.grad * p.grad
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
