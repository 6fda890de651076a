"""
ACT Runner

Drives stages and variants across seeds and owns the output directory::

    <out>/
      metrics.json, metrics.txt        aggregated over seeds, per variant
      sweep_alpha.csv                  from sweep_alpha()
      seed_<k>/
        manifest.json                  config echo, stage summaries,
                                       alignment reports, wall times
        checkpoints/pretrain/          psi_s + eta_s
        checkpoints/align/<objective>/ psi_t*
        checkpoints/selflabel/<variant>/ refitted psi_t + eta_t
        variants/<variant>/            scores.csv, metrics.json, pseudo_labels.json
        snapshots/<objective>/epoch_<e>.csv
        embeddings_<stage>.csv         from export_embeddings()
"""

import json
import logging
import time
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ..core.exceptions import ConfigError, DegenerateSelectionError, MissingStageError
from ..data.graph import AttributedGraph, cap_degree
from ..data.io import load_dataset_dir, write_json
from ..data.synthetic import generate_cd_pair
from ..evaluation.metrics import aggregate_by_variant, format_table, summarize_runs
from ..models.encoder import ModelBundle
from ..models.model_manager import CheckpointManager
from ..schemas.config import RunConfig, TrainConfig
from ..schemas.reports import AggregateReport, MetricsReport
from .ablation import ExperimentRun, Variant, VariantOutcome, get_variant
from .pipeline import AlignmentResult, embed_all

logger = logging.getLogger(__name__)

STAGES = ("pretrain", "align", "selflabel", "all")
FLOAT_FORMAT = "%.17g"


def _write_csv(frame: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


class ActRunner:
    """
    Multi-seed ACT driver

    Args:
        config: Validated run configuration
        out_dir: Output root; defaults to ``config.output_dir``

    Example:
        >>> runner = ActRunner(load_run_config("act.json"))
        >>> aggregates = runner.run(stage="all", variants=["full", "act_if"])
    """

    def __init__(self, config: RunConfig, out_dir: Optional[Union[str, Path]] = None):
        self.config = config
        self.out_dir = Path(out_dir) if out_dir is not None else Path(config.output_dir)
        self._graphs: Optional[Tuple[AttributedGraph, AttributedGraph]] = None

    # Data

    def load_data(self) -> Tuple[AttributedGraph, AttributedGraph]:
        """Source and target graphs, degree-capped; shared by every seed."""
        if self._graphs is None:
            data = self.config.data
            if data.uses_generator:
                g_s, g_t = generate_cd_pair(data.generator)
                cap_seed = data.generator.seed
            else:
                g_s = load_dataset_dir(data.source_dir, "source")
                g_t = load_dataset_dir(data.target_dir, "target")
                cap_seed = 0
            self._graphs = (
                cap_degree(g_s, data.max_degree, cap_seed),
                cap_degree(g_t, data.max_degree, cap_seed),
            )
            if not self._graphs[0].has_labels:
                raise ConfigError("source dataset has no labels.txt")
        return self._graphs

    def seed_dir(self, seed: int) -> Path:
        return self.out_dir / f"seed_{seed}"

    def store(self, seed: int) -> CheckpointManager:
        return CheckpointManager(self.seed_dir(seed) / "checkpoints")

    def _seeds(self, seeds: Optional[Sequence[int]]) -> List[int]:
        return list(seeds) if seeds else list(self.config.seeds)

    # Manifest

    def _update_manifest(self, seed: int, cfg: TrainConfig, **sections) -> None:
        """Merge ``sections`` into seed_<k>/manifest.json."""
        path = self.seed_dir(seed) / "manifest.json"
        manifest = json.loads(path.read_text()) if path.exists() else {}
        manifest["seed"] = seed
        manifest["config"] = {
            "data": json.loads(self.config.data.model_dump_json()),
            "train": json.loads(cfg.model_dump_json()),
        }
        for key, value in sections.items():
            if isinstance(value, dict):
                manifest.setdefault(key, {}).update(value)
            else:
                manifest[key] = value
        write_json(manifest, path)

    # Experiment wiring

    def _restore(self, store: CheckpointManager, stage: str) -> Optional[ModelBundle]:
        if not store.exists(stage):
            return None
        return store.load(stage).freeze()

    def _experiment(self, seed: int, trainable: Iterable[str], reuse: bool = False) -> ExperimentRun:
        """
        ExperimentRun for ``seed`` seeded with checkpoints on disk

        Stages in ``trainable`` are recomputed unless ``reuse`` is set.
        """
        trainable = tuple(trainable)
        g_s, g_t = self.load_data()
        cfg = self.config.for_seed(seed)
        store = self.store(seed)

        source = None
        if reuse or "pretrain" not in trainable:
            source = self._restore(store, "pretrain")
        aligned = {}
        if reuse or "align" not in trainable:
            for objective in ("joint", "con_only", "dom_only"):
                bundle = self._restore(store, f"align/{objective}")
                if bundle is not None:
                    aligned[objective] = bundle.encoder

        def on_stage(stage: str, result) -> None:
            if stage == "pretrain":
                store.save("pretrain", result, seed=seed, extra={"summary": result.summary.model_dump()})
                self._update_manifest(seed, cfg, stages={"pretrain": result.summary.model_dump()})
            elif stage.startswith("align/"):
                self._save_alignment(seed, cfg, store, result)

        return ExperimentRun(g_s, g_t, cfg, source=source, aligned=aligned, trainable=trainable, on_stage=on_stage)

    def _save_alignment(self, seed: int, cfg: TrainConfig, store: CheckpointManager, result: AlignmentResult) -> None:
        objective = result.report.objective
        store.save(
            f"align/{objective}",
            ModelBundle(result.encoder, None, "target"),
            seed=seed,
            extra={"objective": objective, "trace": result.report.trace},
        )
        report = result.report.model_dump(exclude_none=True)
        self._update_manifest(seed, cfg, alignment={objective: report})

        for epoch, snapshot in sorted(result.snapshots.items()):
            frames = []
            for domain in ("source", "target"):
                z = snapshot[domain]
                frame = pd.DataFrame(z, columns=[f"z{i}" for i in range(z.shape[1])])
                frame.insert(0, "node_id", snapshot[f"{domain}_nodes"])
                frame.insert(0, "domain", domain)
                frames.append(frame)
            _write_csv(
                pd.concat(frames, ignore_index=True),
                self.seed_dir(seed) / "snapshots" / objective / f"epoch_{epoch}.csv",
            )

    def _write_outcome(self, seed: int, outcome: VariantOutcome) -> None:
        directory = self.seed_dir(seed) / "variants" / outcome.variant
        frame = pd.DataFrame({"node_id": outcome.scores.nodes, "score": outcome.scores.scores})
        _write_csv(frame, directory / "scores.csv")
        if outcome.metrics is not None:
            write_json(outcome.metrics.model_dump(), directory / "metrics.json")
        if outcome.pseudo is not None:
            write_json(outcome.pseudo.to_dict(), directory / "pseudo_labels.json")
        if outcome.bundle is not None:
            extra = {"variant": outcome.variant}
            if outcome.bundle.summary is not None:
                extra["summary"] = outcome.bundle.summary.model_dump()
            self.store(seed).save(f"selflabel/{outcome.variant}", outcome.bundle, seed=seed, extra=extra)

    # Stages

    def run_seed(self, seed: int, stage: str = "all", variants: Sequence[str] = ("full",)) -> List[MetricsReport]:
        """
        Run ``stage`` for one seed

        ``pretrain`` trains psi_s; ``align`` needs the pretrain checkpoint and
        aligns psi_t for every objective the variants use; ``selflabel``
        needs both and produces the variants' final scores; ``all`` does
        everything, reusing checkpoints already on disk.

        Raises:
            MissingStageError: prerequisite checkpoint missing
        """
        if stage not in STAGES:
            raise ConfigError(f"unknown stage '{stage}'; choose from {', '.join(STAGES)}")
        resolved: List[Variant] = [get_variant(name) for name in variants]
        trainable = {
            "pretrain": ("pretrain",),
            "align": ("align",),
            "selflabel": ("selflabel",),
            "all": ("pretrain", "align", "selflabel"),
        }[stage]

        started = time.perf_counter()
        experiment = self._experiment(seed, trainable)
        cfg = experiment.cfg
        reports: List[MetricsReport] = []

        if stage == "pretrain":
            experiment.pretrain()
        elif stage == "align":
            if not experiment.has_source:
                raise MissingStageError("pretrain")
            for objective in sorted({v.objective for v in resolved if v.objective is not None}):
                experiment.aligned(objective)
        else:
            for variant in resolved:
                outcome = experiment.run_variant(variant)
                self._write_outcome(seed, outcome)
                if outcome.metrics is not None:
                    reports.append(outcome.metrics)
                    self._update_manifest(seed, cfg, variants={variant.name: outcome.metrics.model_dump()})

        elapsed = time.perf_counter() - started
        self._update_manifest(seed, cfg, wall_time_seconds={stage: round(elapsed, 3)})
        logger.info(f"Seed {seed} stage '{stage}' finished in {elapsed:.1f}s", extra={"seed": seed, "stage": stage})
        return reports

    def run(
        self,
        stage: str = "all",
        variants: Sequence[str] = ("full",),
        seeds: Optional[Sequence[int]] = None,
    ) -> Dict[str, AggregateReport]:
        """
        Run ``stage`` for every seed and aggregate metrics per variant

        Returns:
            Dict[str, AggregateReport]: empty for ``pretrain`` / ``align`` or
                unlabelled targets
        """
        reports: List[MetricsReport] = []
        for seed in self._seeds(seeds):
            reports.extend(self.run_seed(seed, stage, variants))

        aggregates = aggregate_by_variant(reports)
        if aggregates:
            write_json({name: a.model_dump() for name, a in aggregates.items()}, self.out_dir / "metrics.json")
            table = format_table(aggregates.values())
            (self.out_dir / "metrics.txt").write_text(table)
            logger.info("Results across seeds:\n" + table)
        return aggregates

    def sweep_alpha(
        self,
        alphas: Sequence[float],
        seeds: Optional[Sequence[int]] = None,
        variant: str = "full",
    ) -> pd.DataFrame:
        """
        Self-labelling + refit per alpha, sharing pretrain/alignment checkpoints

        A degenerate selection drops that (alpha, seed) pair; an alpha where
        every seed is degenerate yields a row with status ``degenerate``.

        Returns:
            pd.DataFrame: one row per alpha, also written to sweep_alpha.csv
        """
        if not alphas:
            raise ConfigError("sweep-alpha needs at least one alpha")
        if any(a <= 0 for a in alphas):
            raise ConfigError("alpha values must be positive")
        chosen = get_variant(variant)
        if not chosen.refit:
            raise ConfigError(f"variant '{variant}' does not self-label; alpha has no effect")

        experiments = {seed: self._experiment(seed, ("pretrain", "align", "selflabel"), reuse=True) for seed in self._seeds(seeds)}
        rows = []
        for alpha in alphas:
            reports = []
            for seed, experiment in experiments.items():
                try:
                    reports.append(experiment.run_variant(chosen, alpha=alpha).metrics)
                except DegenerateSelectionError as e:
                    logger.warning(f"alpha={alpha}: {e.detail}", extra={"seed": seed, "variant": variant})
            reports = [r for r in reports if r is not None]
            if reports:
                agg = summarize_runs(reports, variant)
                rows.append({
                    "alpha": alpha,
                    "auc_roc": agg.auc_roc_mean,
                    "auc_pr": agg.auc_pr_mean,
                    "auc_roc_std": agg.auc_roc_std,
                    "auc_pr_std": agg.auc_pr_std,
                    "n_runs": agg.n_runs,
                    "status": "ok",
                })
            else:
                rows.append({
                    "alpha": alpha,
                    "auc_roc": np.nan,
                    "auc_pr": np.nan,
                    "auc_roc_std": np.nan,
                    "auc_pr_std": np.nan,
                    "n_runs": 0,
                    "status": "degenerate",
                })

        frame = pd.DataFrame(rows)
        _write_csv(frame, self.out_dir / "sweep_alpha.csv")
        return frame

    def export_embeddings(
        self,
        seed: int,
        stage: str = "align",
        variant: str = "full",
        out_file: Optional[Union[str, Path]] = None,
    ) -> Path:
        """
        Write one CSV row per node of both domains: node_id, domain, label, stage, z0..z{M-1}

        Source rows always come from psi_s; target rows from the aligned
        encoder (``stage = align``) or the refitted one (``stage = selflabel``).

        Raises:
            MissingStageError: checkpoint for the requested stage missing
        """
        g_s, g_t = self.load_data()
        cfg = self.config.for_seed(seed)
        store = self.store(seed)
        chosen = get_variant(variant)

        source = store.load("pretrain")
        if stage == "align":
            if chosen.objective is None:
                raise ConfigError(f"variant '{variant}' has no aligned encoder")
            target_key = f"align/{chosen.objective}"
            if not store.exists(target_key):
                raise MissingStageError("align")
        elif stage == "selflabel":
            target_key = f"selflabel/{variant}"
            if not store.exists(target_key):
                raise MissingStageError("selflabel", f"missing checkpoint for variant '{variant}'; run --stage selflabel first")
        else:
            raise ConfigError(f"cannot export embeddings for stage '{stage}'; choose align or selflabel")
        target = store.load(target_key)

        frames = []
        for graph, encoder, tag in ((g_s, source.encoder, "pretrain"), (g_t, target.encoder, stage)):
            z = embed_all(encoder, graph, cfg)
            frame = pd.DataFrame(z, columns=[f"z{i}" for i in range(z.shape[1])])
            labels = graph.heldout_labels if graph.heldout_labels is not None else graph.labels
            frame.insert(0, "stage", tag)
            frame.insert(0, "label", pd.array(labels, dtype="Int64") if labels is not None else pd.NA)
            frame.insert(0, "domain", graph.domain)
            frame.insert(0, "node_id", np.arange(graph.num_nodes))
            frames.append(frame)

        path = Path(out_file) if out_file is not None else self.seed_dir(seed) / f"embeddings_{stage}.csv"
        _write_csv(pd.concat(frames, ignore_index=True), path)
        logger.info(f"Exported {sum(len(f) for f in frames)} embeddings to {path}", extra={"seed": seed, "stage": stage})
        return path
