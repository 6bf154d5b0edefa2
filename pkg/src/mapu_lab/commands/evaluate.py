"""Evaluation command."""

from __future__ import annotations

from pathlib import Path

import typer

from mapu_lab import __version__, data
from mapu_lab._tty import success
from mapu_lab.commands import CONFIG_OPTION, SET_OPTION, command_context
from mapu_lab.config import resolve_config
from mapu_lab.nets import load_checkpoint
from mapu_lab.output import write_csv, write_json
from mapu_lab.training import evaluate as run_evaluate
from mapu_lab.training import feature_frame


def evaluate(
    checkpoint: Path = typer.Option(..., "--checkpoint", help="Checkpoint to evaluate."),
    dataset: Path = typer.Option(..., "--data", "-d", help="A .tsd dataset file, e.g. target_test.tsd."),
    out: Path = typer.Option(..., "--out", "-o", help="Directory for metrics.json and the CSV tables."),
    features: bool = typer.Option(False, "--features", help="Also write pooled encoder features to features.csv."),
    config: Path | None = CONFIG_OPTION,
    overrides: list[str] | None = SET_OPTION,
) -> None:
    """Score a checkpoint on a dataset: accuracy, MF1, calibration and entropy."""
    with command_context("evaluating") as output:
        cfg = resolve_config(config_path=config, overrides=overrides)
        bundle = load_checkpoint(checkpoint)
        ds = data.load(dataset)
        result = run_evaluate(bundle, ds, bins=cfg.eval.bins, histogram_bins=cfg.eval.histogram_bins)

        report = {
            "version": __version__,
            "checkpoint": {"path": str(checkpoint), "meta": bundle.meta},
            "dataset": str(dataset),
            "config": cfg.model_dump(mode="json"),
            "metrics": result.summary,
        }
        write_json(out / "metrics.json", report)
        for view, calibration in result.calibration.items():
            write_csv(out / f"calibration_{view}.csv", calibration.to_frame())
        write_csv(out / "entropy_histogram.csv", result.entropy.to_frame())
        if features or cfg.eval.export_features:
            write_csv(out / "features.csv", feature_frame(result.predictions, ds, dataset.stem))
        output.status(success(f"Wrote metrics to {out}"))

        view = result.summary["view"]
        output.render_detail(
            result.summary,
            [
                ("View", "view"),
                ("Samples", "n"),
                ("Accuracy", "accuracy"),
                ("Macro-F1", "macro_f1"),
                ("ECE", f"views.{view}.calibration.ece"),
                ("MCE", f"views.{view}.calibration.mce"),
                ("Brier", f"views.{view}.calibration.brier"),
                ("Mean uncertainty", "mean_uncertainty"),
            ],
        )
