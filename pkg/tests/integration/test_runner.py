"""
Integration tests for the multi-seed runner.

Each test drives the full stage chain on the 120-node synthetic pair with
the reduced train config and inspects what lands on disk.
"""

import json

import numpy as np
import pandas as pd
import pytest

from services.act.core.exceptions import ConfigError, MissingStageError
from services.act.data.synthetic import write_cd_pair
from services.act.schemas.config import DataConfig
from services.act.training.runner import ActRunner


def _tree_bytes(root, skip=("manifest.json",)):
    """Relative path -> bytes for every file under ``root`` except seed manifests."""
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file() and not (p.name in skip and p.parent.name.startswith("seed_"))
    }


@pytest.mark.integration
class TestRunnerStages:
    def test_full_run_writes_outputs(self, run_config):
        runner = ActRunner(run_config)

        aggregates = runner.run(stage="all", variants=["full", "act_if"])

        out = run_config.output_dir
        assert set(aggregates) == {"full", "act_if"}
        assert aggregates["full"].n_runs == 2
        assert (out / "metrics.txt").read_text().startswith("variant")
        assert set(json.loads((out / "metrics.json").read_text())) == {"full", "act_if"}

        seed_dir = out / "seed_0"
        for stage in ("pretrain", "align/joint", "selflabel/full"):
            assert (seed_dir / "checkpoints" / stage / "weights.bin").exists()
        assert not (seed_dir / "checkpoints" / "selflabel" / "act_if").exists()

        scores = pd.read_csv(seed_dir / "variants" / "full" / "scores.csv")
        assert list(scores.columns) == ["node_id", "score"]
        assert len(scores) == 120
        pseudo = json.loads((seed_dir / "variants" / "full" / "pseudo_labels.json").read_text())
        assert pseudo["anomalies"] and pseudo["normals"]
        assert not (seed_dir / "variants" / "act_if" / "pseudo_labels.json").exists()

    def test_manifest_contents(self, run_config):
        runner = ActRunner(run_config)
        runner.run(stage="all", variants=["full", "con_only"], seeds=[0])

        manifest = json.loads((run_config.output_dir / "seed_0" / "manifest.json").read_text())

        assert manifest["seed"] == 0
        assert manifest["config"]["train"]["seed"] == 0
        assert manifest["stages"]["pretrain"]["stage"] == "pretrain"
        assert set(manifest["alignment"]) == {"joint", "con_only"}
        assert "sinkhorn_seconds" in manifest["alignment"]["joint"]
        assert "sinkhorn_seconds" not in manifest["alignment"]["con_only"]
        assert len(manifest["alignment"]["joint"]["trace"]) == run_config.train.align_epochs + 1
        assert set(manifest["variants"]) == {"full", "con_only"}
        assert "all" in manifest["wall_time_seconds"]

    def test_stage_by_stage_matches_all(self, run_config, tmp_path):
        staged = ActRunner(run_config, out_dir=tmp_path / "staged")
        for stage in ("pretrain", "align", "selflabel"):
            staged.run(stage=stage, seeds=[0])
        ActRunner(run_config, out_dir=tmp_path / "all").run(stage="all", seeds=[0])

        a = pd.read_csv(tmp_path / "staged" / "seed_0" / "variants" / "full" / "scores.csv")
        b = pd.read_csv(tmp_path / "all" / "seed_0" / "variants" / "full" / "scores.csv")
        pd.testing.assert_frame_equal(a, b)

    def test_align_without_pretrain(self, run_config):
        with pytest.raises(MissingStageError) as excinfo:
            ActRunner(run_config).run(stage="align", seeds=[0])
        assert excinfo.value.stage == "pretrain"
        assert excinfo.value.exit_code == 3

    def test_selflabel_without_align(self, run_config):
        runner = ActRunner(run_config)
        runner.run(stage="pretrain", seeds=[0])
        with pytest.raises(MissingStageError) as excinfo:
            runner.run(stage="selflabel", seeds=[0])
        assert excinfo.value.stage == "align"

    def test_unknown_stage(self, run_config):
        with pytest.raises(ConfigError):
            ActRunner(run_config).run_seed(0, stage="finetune")

    def test_dataset_directories(self, run_config, synthetic_config, tmp_path):
        write_cd_pair(synthetic_config, tmp_path / "data")
        config = run_config.model_copy(update={
            "data": DataConfig(source_dir=tmp_path / "data" / "source", target_dir=tmp_path / "data" / "target", max_degree=32),
        })

        aggregates = ActRunner(config).run(stage="all", variants=["act_if"], seeds=[0])

        assert 0.0 <= aggregates["act_if"].auc_roc_mean <= 1.0


@pytest.mark.integration
class TestRunnerDeterminism:
    def test_identical_bytes_across_runs(self, run_config, tmp_path):
        for name in ("a", "b"):
            ActRunner(run_config, out_dir=tmp_path / name).run(stage="all", variants=["full", "dom_only"])

        a = _tree_bytes(tmp_path / "a")
        b = _tree_bytes(tmp_path / "b")

        assert a.keys() == b.keys()
        assert "seed_1/checkpoints/align/dom_only/weights.bin" in a
        for key in a:
            assert a[key] == b[key], key

    def test_rerun_rewrites_identical_checkpoints(self, run_config):
        runner = ActRunner(run_config)
        runner.run(stage="pretrain", seeds=[0])
        weights = run_config.output_dir / "seed_0" / "checkpoints" / "pretrain" / "weights.bin"
        first = weights.read_bytes()

        runner.run(stage="pretrain", seeds=[0])

        assert weights.read_bytes() == first


@pytest.mark.integration
class TestSweepAndExport:
    def test_sweep_alpha(self, run_config):
        runner = ActRunner(run_config)

        frame = runner.sweep_alpha([1.0, 1.5, 50.0], seeds=[0])

        assert list(frame.columns) == ["alpha", "auc_roc", "auc_pr", "auc_roc_std", "auc_pr_std", "n_runs", "status"]
        assert list(frame["status"]) == ["ok", "ok", "degenerate"]
        assert np.isnan(frame["auc_roc"].iloc[2])
        assert frame["n_runs"].iloc[0] == 1
        on_disk = pd.read_csv(run_config.output_dir / "sweep_alpha.csv")
        assert len(on_disk) == 3

    def test_sweep_reuses_alignment(self, run_config):
        runner = ActRunner(run_config)
        runner.run(stage="all", seeds=[0])
        weights = run_config.output_dir / "seed_0" / "checkpoints" / "align" / "joint" / "weights.bin"
        mtime = weights.stat().st_mtime_ns

        runner.sweep_alpha([1.5], seeds=[0])

        assert weights.stat().st_mtime_ns == mtime

    @pytest.mark.parametrize("alphas,variant", [([0.0], "full"), ([1.0], "act_if")])
    def test_sweep_rejects(self, run_config, alphas, variant):
        with pytest.raises(ConfigError):
            ActRunner(run_config).sweep_alpha(alphas, variant=variant)

    def test_export_embeddings(self, run_config):
        runner = ActRunner(run_config)
        runner.run(stage="all", seeds=[0])

        path = runner.export_embeddings(0, stage="selflabel")
        frame = pd.read_csv(path)

        m = run_config.train.embedding_dim
        assert path.name == "embeddings_selflabel.csv"
        assert len(frame) == 120 + 120
        assert list(frame.columns) == ["node_id", "domain", "label", "stage"] + [f"z{i}" for i in range(m)]
        assert set(frame.loc[frame["domain"] == "source", "stage"]) == {"pretrain"}
        assert set(frame.loc[frame["domain"] == "target", "stage"]) == {"selflabel"}
        assert frame["label"].sum() == 12

    def test_export_without_checkpoint(self, run_config):
        runner = ActRunner(run_config)
        runner.run(stage="pretrain", seeds=[0])
        with pytest.raises(MissingStageError):
            runner.export_embeddings(0, stage="align")
