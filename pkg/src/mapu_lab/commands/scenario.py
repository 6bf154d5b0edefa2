"""Full multi-seed scenario command."""

from __future__ import annotations

from pathlib import Path

import typer

from mapu_lab._tty import running, success
from mapu_lab.commands import CONFIG_OPTION, SEED_OPTION, SET_OPTION, command_context
from mapu_lab.config import resolve_config
from mapu_lab.experiment import AGGREGATE_METRICS, run_scenario
from mapu_lab.formatters.table import aggregate_rows


def scenario(
    out: Path = typer.Option(..., "--out", "-o", help="Directory for per-seed results, scenario.json, aggregate.csv."),
    workers: int = typer.Option(1, "--workers", "-w", min=1, help="Seeds to run in parallel."),
    config: Path | None = CONFIG_OPTION,
    overrides: list[str] | None = SET_OPTION,
    seed: int | None = SEED_OPTION,
) -> None:
    """Generate, pretrain, adapt and evaluate every seed, then aggregate mean ± std."""
    with command_context("running scenario") as output:
        cfg = resolve_config(config_path=config, overrides=overrides, seed=seed)
        output.status(running(f"Running {len(cfg.seeds)} seed(s) with {workers} worker(s)"))
        result = run_scenario(cfg, out, workers, progress=output.status)
        output.status(success(f"Wrote {out / 'scenario.json'} ({result.wall_seconds:.1f}s)"))

        if output.is_json_mode:
            output.render_json({"aggregate": result.aggregate, "entropy_gap": result.entropy_gap})
            return
        output.render_table(
            aggregate_rows(result.aggregate, AGGREGATE_METRICS),
            columns=["variant", "runs", *AGGREGATE_METRICS],
            title="Target test, mean ± std over seeds (%)",
        )
