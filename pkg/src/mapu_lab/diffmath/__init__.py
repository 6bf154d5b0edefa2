"""Dense float64 numerics with reverse-mode differentiation."""

from mapu_lab.diffmath import ops, special
from mapu_lab.diffmath.gradcheck import grad_check
from mapu_lab.diffmath.ops import BatchNormStats
from mapu_lab.diffmath.tensor import Tape, Tensor, backward, current_tape, no_grad

__all__ = [
    "BatchNormStats",
    "Tape",
    "Tensor",
    "backward",
    "current_tape",
    "grad_check",
    "no_grad",
    "ops",
    "special",
]
