"""Per-run training record."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

from mapu_lab import __version__
from mapu_lab.errors import NumericalError


@dataclass
class RunReport:
    """Loss series (one value per epoch), final metrics and the config echo.

    Wall time is kept out of every other field so reports from two identical
    runs differ only under ``timing``.
    """

    phase: str
    variant: str
    seed: int
    config: dict[str, Any] = field(default_factory=dict)
    losses: dict[str, list[float]] = field(default_factory=dict)
    eval_trace: list[dict[str, float]] = field(default_factory=list)
    metrics: dict[str, Any] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)
    wall_seconds: float = 0.0

    @property
    def epochs(self) -> int:
        return max((len(v) for v in self.losses.values()), default=0)

    def record(self, epoch: int, values: dict[str, float]) -> None:
        for name, value in values.items():
            if not math.isfinite(value):
                raise NumericalError(f"{self.phase} epoch {epoch}: {name} loss is {value}")
            self.losses.setdefault(name, []).append(value)

    def flag(self, name: str) -> None:
        if name not in self.flags:
            self.flags.append(name)

    def to_dict(self, *, include_timing: bool = True) -> dict[str, Any]:
        out: dict[str, Any] = {
            "version": __version__,
            "phase": self.phase,
            "variant": self.variant,
            "seed": self.seed,
            "config": self.config,
            "losses": self.losses,
            "eval_trace": self.eval_trace,
            "metrics": self.metrics,
            "flags": self.flags,
        }
        if include_timing:
            out["timing"] = {"wall_seconds": self.wall_seconds}
        return out
