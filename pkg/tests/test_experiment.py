"""Tests for seeded scenario runs and their aggregation."""

from __future__ import annotations

import json

import numpy as np
import pandas as pd
import pytest

from mapu_lab.config import ExperimentConfig
from mapu_lab.errors import SchemaError
from mapu_lab.experiment import (
    AGGREGATE_METRICS,
    VARIANTS,
    SeedResult,
    aggregate,
    build_domains,
    mean_entropy_gap,
    phase_config,
    run_scenario,
    run_seed,
)
from tests.conftest import TINY


@pytest.fixture
def two_seeds() -> ExperimentConfig:
    return ExperimentConfig.model_validate({**TINY, "seeds": [3, 4]})


def _without_timing(payload: dict) -> dict:
    return {k: v for k, v in payload.items() if k != "timing"}


class TestBuildDomains:
    def test_split_sizes(self, tiny_splits):
        assert tiny_splits.source_train.n == 36
        assert tiny_splits.source_test.n == 12
        assert tiny_splits.target_train.n == 36
        assert tiny_splits.target_test.n == 12

    def test_domains_differ(self, tiny_splits):
        assert not np.array_equal(tiny_splits.source_train.samples, tiny_splits.target_train.samples)

    def test_seeded(self, tiny_config):
        a, b = build_domains(tiny_config, 5), build_domains(tiny_config, 5)
        for (_, x), (_, y) in zip(a.items(), b.items(), strict=True):
            assert np.array_equal(x.samples, y.samples)
            assert np.array_equal(x.labels, y.labels)


class TestPhaseConfig:
    def test_sets_variant_and_seed(self, tiny_config):
        cfg = phase_config(tiny_config.adapt, "emapu", 9)
        assert cfg.variant == "emapu"
        assert cfg.seed == 9
        assert cfg.epochs == tiny_config.adapt.epochs

    def test_rejects_unknown_variant(self, tiny_config):
        with pytest.raises(SchemaError, match="invalid training phase"):
            phase_config(tiny_config.adapt, "tent", 1)


class TestRunSeed:
    """One seed through pretraining, adaptation and evaluation."""

    def test_evaluations_and_reports(self, tiny_config):
        result = run_seed(tiny_config, 3)
        assert set(result.evaluations) == {*VARIANTS, "source_only_evidential"}
        assert set(result.reports) == {"mapu.pretrain", "mapu.adapt", "emapu.pretrain", "emapu.adapt"}
        assert result.evaluations["emapu"]["view"] == "evidential"
        assert result.evaluations["mapu"]["view"] == "softmax"
        for row in result.evaluations.values():
            for metric in AGGREGATE_METRICS:
                assert np.isfinite(row[metric])
        assert set(result.entropy_gap) == {"softmax", "evidential"}

    def test_writes_seed_directory(self, tiny_config, tmp_path):
        cfg = tiny_config.model_copy(update={"eval": tiny_config.eval.model_copy(update={"export_features": True})})
        run_seed(cfg, 3, tmp_path)
        seed_dir = tmp_path / "seed_3"
        payload = json.loads((seed_dir / "result.json").read_text())
        assert set(payload["timing"]) == {"mapu.pretrain", "mapu.adapt", "emapu.pretrain", "emapu.adapt"}
        assert "timing" not in payload["reports"]["mapu.adapt"]
        assert (seed_dir / "calibration_emapu_evidential.csv").is_file()
        assert (seed_dir / "entropy_source_only.csv").is_file()
        features = pd.read_csv(seed_dir / "features_mapu.csv")
        assert set(features["domain"]) == {"target_unadapted", "target_adapted"}
        assert len(features) == 24

    def test_progress_callback(self, tiny_config):
        notes: list[str] = []
        run_seed(tiny_config, 3, progress=notes.append)
        assert notes == [
            "seed 3: pretraining mapu",
            "seed 3: adapting mapu",
            "seed 3: pretraining emapu",
            "seed 3: adapting emapu",
        ]

    def test_logs_macro_f1(self, tiny_config, caplog):
        with caplog.at_level("INFO", logger="mapu_lab.experiment"):
            run_seed(tiny_config, 3)
        assert "seed 3: MF1 source_only=" in caplog.text


class TestAggregate:
    """Mean and sample standard deviation across seeds."""

    def _result(self, seed: int, f1: float) -> SeedResult:
        row = dict.fromkeys(AGGREGATE_METRICS, f1)
        evaluations = {name: dict(row) for name in (*VARIANTS, "source_only_evidential")}
        return SeedResult(seed=seed, evaluations=evaluations, entropy_gap={"softmax": f1, "evidential": 2 * f1})

    def test_mean_and_sample_std(self):
        table = aggregate([self._result(2, 0.6), self._result(1, 0.8)])
        assert table["mapu"]["runs"] == 2
        assert table["mapu"]["macro_f1"]["mean"] == pytest.approx(0.7)
        assert table["mapu"]["macro_f1"]["std"] == pytest.approx(np.sqrt(0.02))

    def test_single_run_has_zero_std(self):
        table = aggregate([self._result(1, 0.5)])
        assert table["emapu"]["ece"] == {"mean": 0.5, "std": 0.0}

    def test_mean_entropy_gap(self):
        gap = mean_entropy_gap([self._result(1, 0.1), self._result(2, 0.3)])
        assert gap == pytest.approx({"softmax": 0.2, "evidential": 0.4})


class TestRunScenario:
    """Multi-seed runs: files, determinism, parallelism."""

    def test_files(self, two_seeds, tmp_path):
        run_scenario(two_seeds, tmp_path)
        payload = json.loads((tmp_path / "scenario.json").read_text())
        assert [s["seed"] for s in payload["seeds"]] == [3, 4]
        assert set(payload["timing"]["seeds"]) == {"3", "4"}
        frame = pd.read_csv(tmp_path / "aggregate.csv")
        assert list(frame["variant"]) == [*VARIANTS, "source_only_evidential"]
        assert "macro_f1_std" in frame.columns

    def test_deterministic_apart_from_timing(self, two_seeds, tmp_path):
        first = run_scenario(two_seeds, tmp_path / "a").to_dict()
        second = run_scenario(two_seeds, tmp_path / "b").to_dict()
        assert _without_timing(first) == _without_timing(second)
        for name in ("aggregate.csv", "seed_3/entropy_emapu.csv", "seed_4/calibration_mapu_softmax.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_workers_do_not_change_results(self, two_seeds):
        serial = run_scenario(two_seeds, workers=1).to_dict()
        parallel = run_scenario(two_seeds, workers=2).to_dict()
        assert _without_timing(serial) == _without_timing(parallel)


# ── Desk-scale reproductions ─────────────────────────────────────────────


@pytest.fixture(scope="module")
def desk_scenario():
    """Seeds run one after another so wall time per seed is a single-worker figure."""
    return run_scenario(ExperimentConfig(), workers=1)


@pytest.mark.slow
class TestDeskScale:
    """Default synthetic scenario (shift 0.6, three seeds, 40 epochs)."""

    def test_adaptation_gain(self, desk_scenario):
        table = desk_scenario.aggregate
        baseline = table["source_only"]["macro_f1"]["mean"]
        assert table["mapu"]["macro_f1"]["mean"] >= baseline + 0.05
        assert table["emapu"]["macro_f1"]["mean"] >= baseline + 0.05
        assert table["emapu"]["macro_f1"]["mean"] >= table["mapu"]["macro_f1"]["mean"] - 0.01

    def test_evidential_pretraining_calibrates_better(self, desk_scenario):
        table = desk_scenario.aggregate
        softmax, evidential = table["source_only"], table["source_only_evidential"]
        assert evidential["ece"]["mean"] <= softmax["ece"]["mean"] - 0.01
        assert evidential["brier"]["mean"] < softmax["brier"]["mean"]

    def test_evidential_entropy_separates_domains(self, desk_scenario):
        gap = desk_scenario.entropy_gap
        assert gap["evidential"] > 0.0
        assert gap["evidential"] > gap["softmax"]

    def test_runs_within_ten_minutes_per_seed(self, desk_scenario):
        seeds = len(desk_scenario.seeds)
        assert seeds == 3
        assert desk_scenario.wall_seconds / seeds < 600.0
