"""Source-free adaptation command."""

from __future__ import annotations

from pathlib import Path

import typer

from mapu_lab import data
from mapu_lab._tty import running, success, warning
from mapu_lab.commands import (
    CONFIG_OPTION,
    SEED_OPTION,
    SET_OPTION,
    command_context,
    dataset_path,
    report_path,
)
from mapu_lab.config import resolve_config
from mapu_lab.experiment import adapt as run_adapt
from mapu_lab.experiment import phase_config
from mapu_lab.nets import load_checkpoint, save_checkpoint
from mapu_lab.output import write_json


def adapt(
    checkpoint: Path = typer.Option(..., "--checkpoint", help="Pretrained checkpoint."),
    data_dir: Path = typer.Option(..., "--data", "-d", help="Directory holding target_train.tsd."),
    out: Path = typer.Option(..., "--out", "-o", help="Adapted checkpoint path to write."),
    held_out: bool = typer.Option(False, "--held-out", help="Record target_test accuracy after every epoch."),
    config: Path | None = CONFIG_OPTION,
    overrides: list[str] | None = SET_OPTION,
    seed: int | None = SEED_OPTION,
) -> None:
    """Adapt a pretrained checkpoint to unlabeled target_train data.

    The variant (mapu or emapu) is the one the checkpoint was pretrained with.
    """
    with command_context("adapting") as output:
        cfg = resolve_config(config_path=config, overrides=overrides, seed=seed)
        bundle = load_checkpoint(checkpoint)
        variant = bundle.meta.get("variant", cfg.adapt.variant)
        train_cfg = phase_config(cfg.adapt, variant, cfg.seeds[0])
        target = data.load(dataset_path(data_dir, "target_train"))
        monitor = data.load(dataset_path(data_dir, "target_test")) if held_out else None

        output.status(running(f"Adapting {variant} for {train_cfg.epochs} epochs"))
        bundle, report = run_adapt(bundle, target, train_cfg, held_out=monitor)
        save_checkpoint(bundle, out)
        write_json(report_path(out), report.to_dict())
        for flag in report.flags:
            output.status(warning(f"flagged: {flag}"))
        output.status(success(f"Wrote {out}"))

        final = {name: values[-1] for name, values in report.losses.items()}
        output.render_detail(
            {"checkpoint": str(out), "variant": variant, "epochs": report.epochs, "losses": final},
            [("Checkpoint", "checkpoint"), ("Variant", "variant"), ("Epochs", "epochs")]
            + [(f"Loss {name}", f"losses.{name}") for name in final],
        )
