"""Shared command infrastructure."""

from __future__ import annotations

from collections.abc import Generator
from contextlib import contextmanager
from pathlib import Path
from typing import TYPE_CHECKING

import typer

from mapu_lab._exit_codes import IO_ERROR
from mapu_lab.errors import MapuError

if TYPE_CHECKING:
    from mapu_lab.output import OutputContext

CONFIG_OPTION = typer.Option(None, "--config", "-c", help="JSON experiment config (or set MAPU_CONFIG).")
SET_OPTION = typer.Option(None, "--set", help="Override a config key, e.g. adapt.lr=0.003. Repeatable.")
SEED_OPTION = typer.Option(None, "--seed", help="Run a single seed instead of the configured list.")

DATASET_SUFFIX = ".tsd"


@contextmanager
def command_context(operation: str = "") -> Generator[OutputContext, None, None]:
    """Shared context for all commands: maps package errors to exit codes.

    Args:
        operation: Human-readable label for error messages (e.g. "pretraining").
    """
    from mapu_lab.main import state

    output = state.output
    prefix = f"{operation}: " if operation else ""
    try:
        yield output
    except MapuError as e:
        output.error(f"error: {prefix}{e}")
        raise typer.Exit(e.exit_code) from None
    except OSError as e:
        output.error(f"error: {prefix}{e}")
        raise typer.Exit(IO_ERROR) from None


def dataset_path(data_dir: Path, split: str) -> Path:
    """``<data_dir>/<split>.tsd``, the layout written by ``mapu generate``."""
    return data_dir / f"{split}{DATASET_SUFFIX}"


def report_path(artifact: Path) -> Path:
    """Report written next to a checkpoint: ``model.ckpt`` -> ``model.report.json``."""
    return artifact.with_name(f"{artifact.stem}.report.json")
