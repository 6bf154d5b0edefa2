"""Central-difference gradient checking against the tape."""

from __future__ import annotations

from collections.abc import Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike

from mapu_lab.diffmath.tensor import FloatArray, Tape, Tensor, backward, no_grad
from mapu_lab.errors import NumericalError


def _nudge(point: FloatArray, kinks: Sequence[float], h: float) -> FloatArray:
    """Move coordinates sitting on a non-smooth point out of the probe window."""
    out = point.copy()
    for kink in kinks:
        close = np.abs(out - kink) <= 2.0 * h
        out[close] = kink + 10.0 * h
    return out


def grad_check(
    f: Callable[[Tensor], Tensor],
    point: ArrayLike,
    h: float = 1e-5,
    kinks: Sequence[float] = (),
) -> float:
    """Worst relative error between autodiff and central differences of scalar ``f``.

    The error is max_i |g_num_i - g_i| / max(max_i |g_i|, 1e-8). Coordinates
    within 2h of any value in ``kinks`` are nudged away first.
    """
    x0 = _nudge(np.array(point, dtype=np.float64), kinks, h)

    x = Tensor(x0, requires_grad=True)
    with Tape():
        loss = f(x)
        backward(loss)
    assert x.grad is not None
    analytic = x.grad.copy()

    numeric = np.zeros_like(x0)
    flat = x0.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            probe = flat.copy()
            probe[i] += h
            upper = f(Tensor(probe.reshape(x0.shape))).item()
            probe[i] -= 2.0 * h
            lower = f(Tensor(probe.reshape(x0.shape))).item()
            if not (np.isfinite(upper) and np.isfinite(lower)):
                raise NumericalError(f"grad_check: non-finite value near coordinate {i}")
            numeric.reshape(-1)[i] = (upper - lower) / (2.0 * h)

    scale = max(float(np.max(np.abs(analytic))) if analytic.size else 0.0, 1e-8)
    return float(np.max(np.abs(numeric - analytic)) / scale)
