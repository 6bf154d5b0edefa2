"""Dataset generation command."""

from __future__ import annotations

from pathlib import Path

import typer

from mapu_lab import data
from mapu_lab._tty import success
from mapu_lab.commands import CONFIG_OPTION, SEED_OPTION, SET_OPTION, command_context, dataset_path
from mapu_lab.config import resolve_config
from mapu_lab.experiment import build_domains


def generate(
    out: Path = typer.Option(..., "--out", "-o", help="Directory for the four .tsd split files."),
    config: Path | None = CONFIG_OPTION,
    overrides: list[str] | None = SET_OPTION,
    seed: int | None = SEED_OPTION,
) -> None:
    """Generate source and target domains for one seed and write their train/test splits."""
    with command_context("generating data") as output:
        cfg = resolve_config(config_path=config, overrides=overrides, seed=seed)
        run_seed = cfg.seeds[0]
        rows = []
        for name, ds in build_domains(cfg, run_seed).items():
            path = dataset_path(out, name)
            data.save(ds, path)
            rows.append(
                {
                    "split": name,
                    "n": ds.n,
                    "channels": ds.channels,
                    "length": ds.length,
                    "classes": ds.num_classes,
                    "path": str(path),
                }
            )
        output.status(success(f"Wrote {len(rows)} splits for seed {run_seed} to {out}"))
        output.render_table(rows, columns=["split", "n", "channels", "length", "classes", "path"])
