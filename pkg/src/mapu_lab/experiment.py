"""Seeded end-to-end runs and their aggregation.

One seed run generates a source and a target domain, splits both, pretrains
a softmax (``mapu``) and an evidential (``emapu``) model on the source
training split, evaluates the unadapted models on the target test split,
adapts each on the unlabeled target training split and evaluates again.
"""

from __future__ import annotations

import logging
import time
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from pydantic import ValidationError

from mapu_lab import __version__
from mapu_lab.config import ExperimentConfig, ModelConfig, TrainConfig
from mapu_lab.data import Dataset, DomainSpec, domain_seed, generate_domain, split
from mapu_lab.errors import SchemaError
from mapu_lab.nets import ModelBundle, init_bundle
from mapu_lab.output import write_csv, write_json
from mapu_lab.training import RunReport, adapt_emapu, adapt_mapu, evaluate, feature_frame, pretrain
from mapu_lab.training.evaluate import Evaluation

logger = logging.getLogger(__name__)

VARIANTS = ("source_only", "mapu", "emapu")
AGGREGATE_METRICS = ("macro_f1", "accuracy", "ece", "brier")

ProgressFn = Callable[[str], None]


@dataclass
class DomainSplits:
    source_train: Dataset
    source_test: Dataset
    target_train: Dataset
    target_test: Dataset

    def items(self) -> list[tuple[str, Dataset]]:
        return [
            ("source_train", self.source_train),
            ("source_test", self.source_test),
            ("target_train", self.target_train),
            ("target_test", self.target_test),
        ]


def build_domains(cfg: ExperimentConfig, run_seed: int) -> DomainSplits:
    """Generate and split both domains of one run."""
    m = cfg.model
    source = generate_domain(
        DomainSpec(archetypes=cfg.data.archetypes, shift=cfg.data.source_shift, seed=domain_seed(run_seed, 0)),
        cfg.data.n,
        m.in_channels,
        m.length,
        m.num_classes,
    )
    target = generate_domain(
        DomainSpec(
            archetypes=cfg.data.archetypes,
            shift=cfg.data.resolved_target_shift(),
            seed=domain_seed(run_seed, 1),
        ),
        cfg.data.n,
        m.in_channels,
        m.length,
        m.num_classes,
    )
    source_train, source_test = split(source, cfg.data.train_fraction, run_seed)
    target_train, target_test = split(target, cfg.data.train_fraction, run_seed)
    return DomainSplits(source_train, source_test, target_train, target_test)


def build_bundle(model: ModelConfig, seed: int) -> ModelBundle:
    return init_bundle(
        model.in_channels,
        model.num_classes,
        seed,
        widths=model.widths,
        kernel_size=model.kernel_size,
        hidden=model.hidden,
    )


def phase_config(base: TrainConfig, variant: str, seed: int) -> TrainConfig:
    """Copy of a phase config with the run's variant and seed, revalidated."""
    try:
        return TrainConfig.model_validate({**base.model_dump(), "variant": variant, "seed": seed})
    except ValidationError as e:
        raise SchemaError(f"invalid training phase: {e}") from None


def adapt(
    bundle: ModelBundle, target: Dataset, cfg: TrainConfig, *, held_out: Dataset | None = None
) -> tuple[ModelBundle, RunReport]:
    if cfg.variant == "emapu":
        return adapt_emapu(bundle, target, cfg, held_out=held_out)
    return adapt_mapu(bundle, target, cfg, held_out=held_out)


@dataclass
class SeedResult:
    seed: int
    evaluations: dict[str, dict[str, Any]] = field(default_factory=dict)
    reports: dict[str, RunReport] = field(default_factory=dict)
    entropy_gap: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "evaluations": self.evaluations,
            "entropy_gap": self.entropy_gap,
            "reports": {name: r.to_dict(include_timing=False) for name, r in self.reports.items()},
        }

    def timing(self) -> dict[str, float]:
        return {name: r.wall_seconds for name, r in self.reports.items()}


def _flat_metrics(evaluation: Evaluation) -> dict[str, Any]:
    summary = dict(evaluation.summary)
    view = summary["view"]
    calib = summary["views"][view]["calibration"]
    summary["ece"] = calib["ece"]
    summary["mce"] = calib["mce"]
    summary["brier"] = calib["brier"]
    return summary


def _write_evaluation(out: Path, name: str, evaluation: Evaluation) -> None:
    for view, report in evaluation.calibration.items():
        write_csv(out / f"calibration_{name}_{view}.csv", report.to_frame())
    write_csv(out / f"entropy_{name}.csv", evaluation.entropy.to_frame())


def run_seed(
    cfg: ExperimentConfig,
    seed: int,
    out_dir: Path | None = None,
    progress: ProgressFn | None = None,
) -> SeedResult:
    """Full pipeline for one seed; writes per-seed files when ``out_dir`` is set."""
    note = progress or (lambda _msg: None)
    splits = build_domains(cfg, seed)
    result = SeedResult(seed=seed)
    seed_dir = out_dir / f"seed_{seed}" if out_dir is not None else None
    evals: dict[str, Evaluation] = {}

    for variant in ("mapu", "emapu"):
        note(f"seed {seed}: pretraining {variant}")
        bundle = build_bundle(cfg.model, seed)
        bundle, result.reports[f"{variant}.pretrain"] = pretrain(
            bundle, splits.source_train, phase_config(cfg.pretrain, variant, seed)
        )
        pretrained_name = "source_only" if variant == "mapu" else "source_only_evidential"
        evals[pretrained_name] = evaluate(
            bundle, splits.target_test, bins=cfg.eval.bins, histogram_bins=cfg.eval.histogram_bins
        )
        if variant == "emapu":
            source_view = evaluate(
                bundle, splits.source_test, bins=cfg.eval.bins, histogram_bins=cfg.eval.histogram_bins
            )
            target_entropy = evals[pretrained_name].entropy.views
            result.entropy_gap = {
                view: target_entropy[view].mean - stats.mean for view, stats in source_view.entropy.views.items()
            }

        note(f"seed {seed}: adapting {variant}")
        bundle, result.reports[f"{variant}.adapt"] = adapt(
            bundle, splits.target_train, phase_config(cfg.adapt, variant, seed)
        )
        evals[variant] = evaluate(
            bundle, splits.target_test, bins=cfg.eval.bins, histogram_bins=cfg.eval.histogram_bins
        )
        if seed_dir is not None and cfg.eval.export_features:
            frame = pd.concat(
                [
                    feature_frame(evals[pretrained_name].predictions, splits.target_test, "target_unadapted"),
                    feature_frame(evals[variant].predictions, splits.target_test, "target_adapted"),
                ],
                ignore_index=True,
            )
            write_csv(seed_dir / f"features_{variant}.csv", frame)

    result.evaluations = {name: _flat_metrics(ev) for name, ev in evals.items()}
    if seed_dir is not None:
        for name, ev in evals.items():
            _write_evaluation(seed_dir, name, ev)
        write_json(seed_dir / "result.json", {**result.to_dict(), "timing": result.timing()})
    logger.info(
        "seed %d: MF1 %s",
        seed,
        " ".join(f"{v}={result.evaluations[v]['macro_f1']:.4f}" for v in VARIANTS),
    )
    return result


def aggregate(results: list[SeedResult]) -> dict[str, dict[str, Any]]:
    """Mean and sample standard deviation of each metric per variant, in seed order."""
    ordered = sorted(results, key=lambda r: r.seed)
    table: dict[str, dict[str, Any]] = {}
    for variant in (*VARIANTS, "source_only_evidential"):
        row: dict[str, Any] = {"runs": len(ordered)}
        for metric in AGGREGATE_METRICS:
            values = np.array([r.evaluations[variant][metric] for r in ordered], dtype=np.float64)
            row[metric] = {
                "mean": float(values.mean()),
                "std": float(values.std(ddof=1)) if values.size > 1 else 0.0,
            }
        table[variant] = row
    return table


def mean_entropy_gap(results: list[SeedResult]) -> dict[str, float]:
    """Target minus source mean entropy of the unadapted evidential model, averaged over seeds."""
    return {view: float(np.mean([r.entropy_gap[view] for r in results])) for view in ("softmax", "evidential")}


@dataclass
class ScenarioResult:
    config: dict[str, Any]
    seeds: list[SeedResult]
    aggregate: dict[str, dict[str, Any]]
    entropy_gap: dict[str, float]
    wall_seconds: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": __version__,
            "config": self.config,
            "seeds": [r.to_dict() for r in self.seeds],
            "aggregate": self.aggregate,
            "entropy_gap": self.entropy_gap,
            "timing": {
                "wall_seconds": self.wall_seconds,
                "seeds": {str(r.seed): r.timing() for r in self.seeds},
            },
        }


def aggregate_frame(table: dict[str, dict[str, Any]]) -> pd.DataFrame:
    rows = []
    for variant in (*VARIANTS, "source_only_evidential"):
        stats = table[variant]
        row: dict[str, Any] = {"variant": variant, "runs": stats["runs"]}
        for metric in AGGREGATE_METRICS:
            row[f"{metric}_mean"] = stats[metric]["mean"]
            row[f"{metric}_std"] = stats[metric]["std"]
        rows.append(row)
    return pd.DataFrame(rows)


def run_scenario(
    cfg: ExperimentConfig,
    out_dir: Path | None = None,
    workers: int = 1,
    progress: ProgressFn | None = None,
) -> ScenarioResult:
    """Run every configured seed, in parallel when ``workers`` > 1."""
    started = time.perf_counter()
    results: list[SeedResult] = []
    with ThreadPoolExecutor(max_workers=max(workers, 1)) as executor:
        futures = {executor.submit(run_seed, cfg, seed, out_dir, progress): seed for seed in cfg.seeds}
        for future in as_completed(futures):
            results.append(future.result())
            logger.info("seed %d finished", futures[future])
    results.sort(key=lambda r: r.seed)

    scenario = ScenarioResult(
        config=cfg.model_dump(mode="json"),
        seeds=results,
        aggregate=aggregate(results),
        entropy_gap=mean_entropy_gap(results),
        wall_seconds=time.perf_counter() - started,
    )
    if out_dir is not None:
        write_json(out_dir / "scenario.json", scenario.to_dict())
        write_csv(out_dir / "aggregate.csv", aggregate_frame(scenario.aggregate))
    return scenario
