"""Output manager: --json, TTY detection, Rich tables, atomic report files."""

from __future__ import annotations

import json
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from mapu_lab._tty import is_tty, should_use_color


@dataclass
class OutputContext:
    """Manages output rendering based on flags and terminal state.

    - TTY: Rich tables with aligned columns
    - Non-TTY: tab-separated values for piping
    - --json: the result object as JSON on stdout
    - --quiet: suppress status lines, keep errors
    """

    quiet: bool = False
    force_json: bool = False
    _is_tty: bool = field(default_factory=is_tty)
    _use_color: bool = field(default_factory=should_use_color)

    @property
    def is_json_mode(self) -> bool:
        return self.force_json

    def render_table(self, rows: list[dict[str, Any]], columns: list[str], *, title: str | None = None) -> None:
        """Render rows as a table (Rich in TTY, TSV in pipe)."""
        if self.is_json_mode:
            self.render_json(rows)
            return

        if not rows:
            self.status("No results.")
            return

        if self._is_tty:
            from mapu_lab.formatters.table import render_rich_table

            render_rich_table(rows, columns, title=title, color=self._use_color)
        else:
            self._render_tsv(rows, columns)

    def render_json(self, data: Any) -> None:
        sys.stdout.write(dumps(data) + "\n")

    def render_detail(self, data: dict[str, Any], fields: list[tuple[str, str]]) -> None:
        """Render a single result as label/value pairs.

        Args:
            data: The result dict.
            fields: List of (label, dotted key) pairs to display.
        """
        if self.is_json_mode:
            self.render_json(data)
            return

        if self._is_tty:
            from rich.console import Console
            from rich.table import Table

            console = Console(no_color=not self._use_color)
            table = Table(show_header=False, box=None, padding=(0, 2))
            table.add_column("Field", style="bold cyan")
            table.add_column("Value")
            for label, key in fields:
                table.add_row(label, format_value(deep_get(data, key)))
            console.print(table)
        else:
            for label, key in fields:
                sys.stdout.write(f"{label}\t{format_value(deep_get(data, key))}\n")

    def status(self, msg: str) -> None:
        """Print a status message (suppressed in --quiet mode)."""
        if not self.quiet:
            sys.stderr.write(f"{msg}\n")

    def error(self, msg: str) -> None:
        """Print an error message (always shown)."""
        sys.stderr.write(f"{msg}\n")

    def _render_tsv(self, rows: list[dict[str, Any]], columns: list[str]) -> None:
        for row in rows:
            sys.stdout.write("\t".join(format_value(row.get(col, "")) for col in columns) + "\n")


def deep_get(data: dict[str, Any], key: str) -> Any:
    """Get a value from a nested dict using dot notation."""
    result: Any = data
    for k in key.split("."):
        if isinstance(result, dict):
            result = result.get(k)
        else:
            return None
    return result


def format_value(value: Any) -> str:
    """Format a value for display."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.4f}"
    if isinstance(value, (list, dict)):
        return json.dumps(value, default=_json_default)
    return str(value)


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")


def dumps(data: Any) -> str:
    """Canonical JSON: sorted keys, two-space indent."""
    return json.dumps(data, indent=2, sort_keys=True, default=_json_default)


def atomic_write(path: Path, payload: bytes) -> None:
    """Write through a temp file in the target directory, then rename over ``path``."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def write_json(path: Path, data: Any) -> Path:
    atomic_write(path, (dumps(data) + "\n").encode("utf-8"))
    return path


def write_csv(path: Path, frame: pd.DataFrame) -> Path:
    atomic_write(path, frame.to_csv(index=False, lineterminator="\n").encode("utf-8"))
    return path
