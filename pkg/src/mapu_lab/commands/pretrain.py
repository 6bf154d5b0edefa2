"""Source pretraining command."""

from __future__ import annotations

from pathlib import Path

import typer

from mapu_lab import data
from mapu_lab._tty import running, success
from mapu_lab.commands import (
    CONFIG_OPTION,
    SEED_OPTION,
    SET_OPTION,
    command_context,
    dataset_path,
    report_path,
)
from mapu_lab.config import resolve_config
from mapu_lab.experiment import build_bundle, phase_config
from mapu_lab.nets import save_checkpoint
from mapu_lab.output import write_json
from mapu_lab.training import pretrain as run_pretrain


def pretrain(
    data_dir: Path = typer.Option(..., "--data", "-d", help="Directory written by 'mapu generate'."),
    out: Path = typer.Option(..., "--out", "-o", help="Checkpoint path to write."),
    variant: str | None = typer.Option(None, "--variant", help="mapu or emapu (default: pretrain.variant)."),
    held_out: bool = typer.Option(False, "--held-out", help="Record source_test accuracy after every epoch."),
    config: Path | None = CONFIG_OPTION,
    overrides: list[str] | None = SET_OPTION,
    seed: int | None = SEED_OPTION,
) -> None:
    """Pretrain on source_train and write a checkpoint plus its report."""
    with command_context("pretraining") as output:
        cfg = resolve_config(config_path=config, overrides=overrides, seed=seed)
        run_seed = cfg.seeds[0]
        train_cfg = phase_config(cfg.pretrain, variant or cfg.pretrain.variant, run_seed)
        source = data.load(dataset_path(data_dir, "source_train"))
        monitor = data.load(dataset_path(data_dir, "source_test")) if held_out else None

        output.status(running(f"Pretraining {train_cfg.variant} for {train_cfg.epochs} epochs (seed {run_seed})"))
        bundle, report = run_pretrain(build_bundle(cfg.model, run_seed), source, train_cfg, held_out=monitor)
        save_checkpoint(bundle, out)
        write_json(report_path(out), report.to_dict())
        output.status(success(f"Wrote {out}"))

        final = {name: values[-1] for name, values in report.losses.items()}
        output.render_detail(
            {"checkpoint": str(out), "variant": train_cfg.variant, "epochs": report.epochs, "losses": final},
            [("Checkpoint", "checkpoint"), ("Variant", "variant"), ("Epochs", "epochs")]
            + [(f"Loss {name}", f"losses.{name}") for name in final],
        )
