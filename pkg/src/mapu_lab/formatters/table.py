"""Table formatting: Rich tables and the mean ± std aggregate view."""

from __future__ import annotations

from collections.abc import Sequence
from typing import Any

from rich.console import Console
from rich.table import Table

from mapu_lab.output import format_value


def render_rich_table(
    rows: list[dict[str, Any]],
    columns: list[str],
    *,
    title: str | None = None,
    color: bool = True,
) -> None:
    """Render a Rich table to the console."""
    console = Console(no_color=not color)
    table = Table(title=title, show_edge=False, pad_edge=False)

    for col in columns:
        table.add_column(col.upper(), no_wrap=True)

    for row in rows:
        table.add_row(*[format_value(row.get(col, "")) for col in columns])

    console.print(table)


def mean_std(value: float, spread: float, *, scale: float = 100.0) -> str:
    """'87.31 ± 1.20' with values scaled to percent by default."""
    return f"{value * scale:.2f} ± {spread * scale:.2f}"


def aggregate_rows(aggregate: dict[str, dict[str, Any]], metrics: Sequence[str]) -> list[dict[str, Any]]:
    """Flatten {variant: {metric: {mean, std}, runs}} into display rows."""
    rows = []
    for variant, stats in aggregate.items():
        row: dict[str, Any] = {"variant": variant, "runs": stats["runs"]}
        for metric in metrics:
            cell = stats[metric]
            row[metric] = mean_std(cell["mean"], cell["std"])
        rows.append(row)
    return rows
