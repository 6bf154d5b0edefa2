"""End-to-end tests for the CLI commands."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import pandas as pd
import pytest
from typer.testing import CliRunner

from mapu_lab import __version__
from mapu_lab._exit_codes import IO_ERROR, SCHEMA_ERROR
from mapu_lab.config import ExperimentConfig
from mapu_lab.main import app
from mapu_lab.nets import CHECKPOINT_MAGIC
from tests.conftest import TINY

runner = CliRunner()

SPLITS = ("source_train", "source_test", "target_train", "target_test")


@pytest.fixture(autouse=True)
def _plain_terminal(monkeypatch):
    for var in ("MAPU_FORCE_TTY", "MAPU_CONFIG", "CLICOLOR_FORCE"):
        monkeypatch.delenv(var, raising=False)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory) -> Path:
    """Tiny config, generated splits and one mapu and one emapu checkpoint."""
    root = tmp_path_factory.mktemp("cli")
    (root / "tiny.json").write_text(json.dumps(TINY))
    cfg = str(root / "tiny.json")
    steps = [
        ["generate", "--out", str(root / "data"), "-c", cfg],
        ["pretrain", "-d", str(root / "data"), "-o", str(root / "mapu.ckpt"), "-c", cfg],
        ["pretrain", "-d", str(root / "data"), "-o", str(root / "emapu.ckpt"), "--variant", "emapu", "-c", cfg],
    ]
    for args in steps:
        result = runner.invoke(app, ["-q", *args])
        assert result.exit_code == 0, result.output
    return root


def _cfg(workspace: Path) -> str:
    return str(workspace / "tiny.json")


class TestGlobalOptions:
    def test_version(self):
        result = runner.invoke(app, ["--version"])
        assert result.exit_code == 0
        assert result.output.strip() == f"mapu {__version__}"

    def test_no_args_shows_help(self):
        result = runner.invoke(app, [])
        assert "generate" in result.output
        assert "scenario" in result.output


class TestGenerate:
    """Test the generate command."""

    def test_writes_four_splits(self, workspace):
        for name in SPLITS:
            assert (workspace / "data" / f"{name}.tsd").is_file()

    def test_tsv_rows(self, tmp_path, workspace):
        result = runner.invoke(app, ["-q", "generate", "-o", str(tmp_path), "-c", _cfg(workspace)])
        assert result.exit_code == 0
        lines = result.stdout.strip().splitlines()
        assert [line.split("\t")[0] for line in lines] == list(SPLITS)
        assert lines[0].split("\t")[1:5] == ["36", "2", "32", "3"]

    def test_same_seed_same_bytes(self, tmp_path, workspace):
        runner.invoke(app, ["-q", "generate", "-o", str(tmp_path), "-c", _cfg(workspace)])
        for name in SPLITS:
            ours = (tmp_path / f"{name}.tsd").read_bytes()
            assert ours == (workspace / "data" / f"{name}.tsd").read_bytes()

    def test_seed_flag_changes_data(self, tmp_path, workspace):
        runner.invoke(app, ["-q", "generate", "-o", str(tmp_path), "-c", _cfg(workspace), "--seed", "11"])
        assert (tmp_path / "target_train.tsd").read_bytes() != (workspace / "data" / "target_train.tsd").read_bytes()

    def test_json_output(self, tmp_path, workspace):
        result = runner.invoke(app, ["--json", "-q", "generate", "-o", str(tmp_path), "-c", _cfg(workspace)])
        rows = json.loads(result.stdout)
        assert {row["split"] for row in rows} == set(SPLITS)

    def test_invalid_override_exits_schema_error(self, tmp_path):
        result = runner.invoke(app, ["generate", "-o", str(tmp_path), "--set", "data.n=1"])
        assert result.exit_code == SCHEMA_ERROR
        assert "generating data" in result.output
        assert not any(tmp_path.iterdir())


class TestPretrain:
    """Test the pretrain command."""

    def test_report_next_to_checkpoint(self, workspace):
        report = json.loads((workspace / "emapu.report.json").read_text())
        assert report["phase"] == "pretrain"
        assert report["variant"] == "emapu"
        assert all(len(series) == 2 for series in report["losses"].values())
        assert "wall_seconds" in report["timing"]

    def test_detail_output(self, tmp_path, workspace):
        out = tmp_path / "m.ckpt"
        result = runner.invoke(
            app, ["-q", "pretrain", "-d", str(workspace / "data"), "-o", str(out), "-c", _cfg(workspace)]
        )
        assert result.exit_code == 0
        assert f"Checkpoint\t{out}" in result.stdout
        assert "Variant\tmapu" in result.stdout
        assert "Epochs\t2" in result.stdout

    def test_unknown_variant(self, tmp_path, workspace):
        result = runner.invoke(
            app,
            ["pretrain", "-d", str(workspace / "data"), "-o", str(tmp_path / "m.ckpt"), "--variant", "tent"],
        )
        assert result.exit_code == SCHEMA_ERROR

    def test_missing_data_dir(self, tmp_path, workspace):
        result = runner.invoke(
            app, ["pretrain", "-d", str(tmp_path / "nowhere"), "-o", str(tmp_path / "m.ckpt"), "-c", _cfg(workspace)]
        )
        assert result.exit_code == IO_ERROR
        assert "pretraining" in result.output

    def test_corrupt_dataset(self, tmp_path, workspace):
        (tmp_path / "source_train.tsd").write_bytes(b"garbage")
        result = runner.invoke(
            app, ["pretrain", "-d", str(tmp_path), "-o", str(tmp_path / "m.ckpt"), "-c", _cfg(workspace)]
        )
        assert result.exit_code == IO_ERROR
        assert "truncated header" in result.output


class TestAdapt:
    """Test the adapt command."""

    @pytest.mark.parametrize("variant", ["mapu", "emapu"])
    def test_adapts_with_checkpoint_variant(self, tmp_path, workspace, variant):
        out = tmp_path / f"{variant}-adapted.ckpt"
        result = runner.invoke(
            app,
            [
                "-q",
                "adapt",
                "--checkpoint",
                str(workspace / f"{variant}.ckpt"),
                "-d",
                str(workspace / "data"),
                "-o",
                str(out),
                "--held-out",
                "-c",
                _cfg(workspace),
            ],
        )
        assert result.exit_code == 0, result.output
        assert out.is_file()
        report = json.loads((tmp_path / f"{variant}-adapted.report.json").read_text())
        assert report["phase"] == "adapt"
        assert report["variant"] == variant
        assert len(report["eval_trace"]) == 2

    def test_missing_checkpoint(self, tmp_path, workspace):
        result = runner.invoke(
            app,
            ["adapt", "--checkpoint", str(tmp_path / "absent.ckpt"), "-d", str(workspace / "data"), "-o", "x.ckpt"],
        )
        assert result.exit_code == IO_ERROR


class TestEvaluate:
    """Test the evaluate command."""

    def _run(self, workspace: Path, out: Path, global_opts: list[str], *extra: str):
        return runner.invoke(
            app,
            [
                *global_opts,
                "evaluate",
                "--checkpoint",
                str(workspace / "emapu.ckpt"),
                "-d",
                str(workspace / "data" / "target_test.tsd"),
                "-o",
                str(out),
                "-c",
                _cfg(workspace),
                *extra,
            ],
        )

    def test_writes_metrics_and_tables(self, tmp_path, workspace):
        result = self._run(workspace, tmp_path, ["-q"])
        assert result.exit_code == 0, result.output
        report = json.loads((tmp_path / "metrics.json").read_text())
        assert report["checkpoint"]["meta"]["variant"] == "emapu"
        assert report["metrics"]["view"] == "evidential"
        assert report["metrics"]["n"] == 12
        assert report["config"] == ExperimentConfig.model_validate(TINY).model_dump(mode="json")
        assert report["config"]["eval"]["bins"] == 5
        for view in ("softmax", "evidential"):
            assert len(pd.read_csv(tmp_path / f"calibration_{view}.csv")) == 5
        assert len(pd.read_csv(tmp_path / "entropy_histogram.csv")) > 0
        assert not (tmp_path / "features.csv").exists()
        assert "View\tevidential" in result.stdout

    def test_features_flag(self, tmp_path, workspace):
        result = self._run(workspace, tmp_path, ["-q"], "--features")
        assert result.exit_code == 0
        frame = pd.read_csv(tmp_path / "features.csv")
        assert len(frame) == 12
        assert set(frame["domain"]) == {"target_test"}

    def test_json_output(self, tmp_path, workspace):
        result = self._run(workspace, tmp_path, ["--json", "-q"])
        summary = json.loads(result.stdout)
        assert 0.0 <= summary["accuracy"] <= 1.0
        assert set(summary["views"]) == {"softmax", "evidential"}

    def test_not_a_checkpoint(self, tmp_path, workspace):
        result = runner.invoke(
            app,
            [
                "evaluate",
                "--checkpoint",
                str(workspace / "data" / "target_test.tsd"),
                "-d",
                str(workspace / "data" / "target_test.tsd"),
                "-o",
                str(tmp_path),
            ],
        )
        assert result.exit_code == IO_ERROR
        assert "not a checkpoint" in result.output

    def test_checkpoint_header_without_architecture(self, tmp_path, workspace):
        payload = json.dumps({"params": []}).encode("utf-8")
        broken = tmp_path / "broken.ckpt"
        broken.write_bytes(CHECKPOINT_MAGIC + struct.pack("<Q", len(payload)) + payload)
        result = runner.invoke(
            app,
            [
                "evaluate",
                "--checkpoint",
                str(broken),
                "-d",
                str(workspace / "data" / "target_test.tsd"),
                "-o",
                str(tmp_path / "eval"),
            ],
        )
        assert result.exit_code == IO_ERROR
        assert "malformed checkpoint header" in result.output


class TestScenario:
    """Test the scenario command."""

    def test_tsv_aggregate(self, tmp_path, workspace):
        result = runner.invoke(app, ["-q", "scenario", "-o", str(tmp_path), "-c", _cfg(workspace)])
        assert result.exit_code == 0, result.output
        variants = [line.split("\t")[0] for line in result.stdout.strip().splitlines()]
        assert variants == ["source_only", "mapu", "emapu", "source_only_evidential"]
        assert (tmp_path / "scenario.json").is_file()
        assert (tmp_path / "aggregate.csv").is_file()
        assert (tmp_path / "seed_3" / "result.json").is_file()

    def test_json_output(self, tmp_path, workspace):
        result = runner.invoke(app, ["--json", "-q", "scenario", "-o", str(tmp_path), "-c", _cfg(workspace)])
        payload = json.loads(result.stdout)
        assert set(payload) == {"aggregate", "entropy_gap"}
        assert payload["aggregate"]["mapu"]["runs"] == 1

    def test_zero_workers_rejected(self, tmp_path):
        result = runner.invoke(app, ["scenario", "-o", str(tmp_path), "--workers", "0"])
        assert result.exit_code == 2
