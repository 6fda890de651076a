"""
Smoke tests for the ``act`` command-line interface.

Every subcommand is invoked in-process through click's CliRunner against
the reduced configuration fixture.
"""

import json

import pandas as pd
import pytest
from click.testing import CliRunner

from services.act import __version__
from services.act.cli import cli


@pytest.fixture
def runner():
    return CliRunner()


def _invoke(runner, *args):
    return runner.invoke(cli, ["--text-logs", "--log-level", "WARNING", *args])


@pytest.mark.integration
class TestCliSmoke:
    def test_version(self, runner):
        result = runner.invoke(cli, ["--version"])
        assert result.exit_code == 0
        assert __version__ in result.output

    def test_init_writes_default_config(self, runner, tmp_path):
        path = tmp_path / "act.json"

        result = _invoke(runner, "init", "--out", str(path))

        assert result.exit_code == 0, result.output
        payload = json.loads(path.read_text())
        assert payload["train"]["alpha"] == 2.5
        assert payload["seeds"] == [0, 1, 2, 3, 4]

    def test_generate(self, runner, config_file, tmp_path):
        out = tmp_path / "data"

        result = _invoke(runner, "generate", "--config", str(config_file), "--out", str(out))

        assert result.exit_code == 0, result.output
        for name in ("edges.txt", "features.csv", "labels.txt"):
            assert (out / "source" / name).exists()
            assert (out / "target" / name).exists()
        assert json.loads((out / "manifest.json").read_text())["seed"] == 0

    def test_run_and_export(self, runner, config_file, tmp_path):
        out = tmp_path / "cli_runs"

        result = _invoke(runner, "run", "--config", str(config_file), "--seeds", "0",
                         "--variant", "full", "--variant", "act_if", "--out", str(out))

        assert result.exit_code == 0, result.output
        assert "full: AUC-ROC" in result.output
        assert (out / "seed_0" / "variants" / "act_if" / "scores.csv").exists()

        export = _invoke(runner, "export-embeddings", "--config", str(config_file), "--seed", "0",
                         "--stage", "align", "--out", str(out))

        assert export.exit_code == 0, export.output
        assert len(pd.read_csv(out / "seed_0" / "embeddings_align.csv")) == 240

    def test_sweep_alpha(self, runner, config_file, tmp_path):
        out = tmp_path / "sweep"

        result = _invoke(runner, "sweep-alpha", "--config", str(config_file), "--alphas", "1.5,50",
                         "--seeds", "0", "--out", str(out))

        assert result.exit_code == 0, result.output
        frame = pd.read_csv(out / "sweep_alpha.csv")
        assert list(frame["status"]) == ["ok", "degenerate"]

    def test_missing_stage_exit_code(self, runner, config_file, tmp_path):
        result = _invoke(runner, "run", "--config", str(config_file), "--stage", "align",
                         "--seeds", "0", "--out", str(tmp_path / "empty"))

        assert result.exit_code == 3
        assert "run --stage pretrain first" in result.output

    def test_bad_config_exit_code(self, runner, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"data": {"generator": {"anomaly_ratio_source": 0.3}}}))

        result = _invoke(runner, "run", "--config", str(path))

        assert result.exit_code == 2

    def test_bad_seed_list(self, runner, config_file):
        result = _invoke(runner, "run", "--config", str(config_file), "--seeds", "a,b")
        assert result.exit_code == 2
