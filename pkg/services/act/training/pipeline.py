"""
ACT Training Pipeline

The three stages of anomaly-aware contrastive alignment:

1. ``pretrain_source``: deviation-loss training of psi_s and eta_s on
   labelled source nodes.
2. ``joint_align``: alternating optimisation of the target encoder psi_t,
   per step first on the one-class Sinkhorn alignment loss against frozen
   source embeddings, then on the topology contrastive loss.
3. ``deviation_refit``: deviation-loss training of psi_t (initialised from
   the aligned encoder) and a fresh eta_t on self-labelled target nodes.

All randomness comes from the run seed through named sub-streams.
"""

import copy
import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional

import numpy as np
import torch

from ..core.exceptions import ConfigError, DegenerateSelectionError
from ..data.graph import AttributedGraph
from ..data.sampler import NeighborSampler, sample_fanout
from ..engine.diffcore import AdamOptimizer
from ..losses.contrastive import contrastive_loss
from ..losses.deviation import deviation_loss
from ..losses.sinkhorn import sinkhorn_divergence
from ..models.encoder import ModelBundle, SageEncoder, ScoreHead, build_encoder
from ..schemas.config import TrainConfig
from ..schemas.reports import AlignmentReport, StageSummary
from ..utils.seeding import numpy_rng, torch_generator
from .selflabel import PseudoLabelSet, ScoreVector

logger = logging.getLogger(__name__)

Objective = Literal["joint", "con_only", "dom_only"]

SCORING_CHUNK = 2048


@dataclass
class AlignmentResult:
    """Aligned target encoder psi_t* with its training report and monitor snapshots."""

    encoder: SageEncoder
    report: AlignmentReport
    snapshots: Dict[int, Dict[str, np.ndarray]] = field(default_factory=dict)


def _sampler(
    graph: AttributedGraph,
    cfg: TrainConfig,
    stream: str,
    pool: Optional[np.ndarray] = None,
) -> NeighborSampler:
    return NeighborSampler(
        graph,
        batch_size=cfg.batch_size,
        negatives=cfg.sampler.negatives,
        fanouts=cfg.hop_fanouts(),
        rng=numpy_rng(cfg.sampler_seed, stream),
        negative_distribution=cfg.sampler.negative_distribution,
        pool=pool,
    )


def build_source_bundle(graph: AttributedGraph, cfg: TrainConfig) -> ModelBundle:
    generator = torch_generator(cfg.seed, "init.source")
    encoder = build_encoder(graph.num_features, cfg.source_hidden, cfg.embedding_dim, cfg.depth, generator)
    return ModelBundle(encoder, ScoreHead(cfg.embedding_dim, generator), "source")


def build_target_encoder(graph: AttributedGraph, cfg: TrainConfig) -> SageEncoder:
    generator = torch_generator(cfg.seed, "init.target")
    return build_encoder(graph.num_features, cfg.target_hidden, cfg.embedding_dim, cfg.depth, generator)


def labelled_subset(graph: AttributedGraph, fraction: float, seed: int) -> np.ndarray:
    """
    Stratified subset of labelled source nodes

    Each class keeps max(1, round(fraction * count)) nodes so both remain
    present at any fraction.
    """
    labels = graph.labels
    if fraction >= 1.0:
        return np.arange(graph.num_nodes)
    rng = numpy_rng(seed, "labelled_fraction")
    keep = []
    for cls in (0, 1):
        members = np.flatnonzero(labels == cls)
        size = max(1, int(round(fraction * members.size)))
        keep.append(rng.choice(members, size=size, replace=False))
    return np.sort(np.concatenate(keep))


def _check_source_labels(graph: AttributedGraph) -> None:
    if graph.labels is None:
        raise ConfigError("source graph has no labels; pretraining needs labelled anomalies")
    positives = int(graph.labels.sum())
    if positives == 0 or positives == graph.num_nodes:
        raise ConfigError(
            f"source labels are single-class ({positives} anomalies of {graph.num_nodes}); "
            "pretraining needs both anomalies and normals"
        )


def _epoch_log(stage: str, epoch: int, epochs: int, seed: int, **values) -> None:
    summary = ", ".join(f"{k}={v:.5f}" for k, v in values.items())
    logger.info(f"[{stage}] epoch {epoch}/{epochs}: {summary}", extra={"stage": stage, "seed": seed, "epoch": epoch})


def _fit_deviation(
    bundle: ModelBundle,
    graph: AttributedGraph,
    pool: np.ndarray,
    labels: np.ndarray,
    epochs: int,
    lr: float,
    cfg: TrainConfig,
    stage: str,
    balanced: bool = False,
) -> StageSummary:
    """
    Minibatch deviation-loss training of a bundle over ``pool`` (labels aligned to node ids)

    With ``balanced`` every batch pairs pool normals with as many resampled
    pool anomalies.
    """
    sampler = _sampler(graph, cfg, f"sampler.{stage}", pool=pool)
    optimizer = AdamOptimizer(bundle.parameters(), lr=lr)
    reference = torch_generator(cfg.seed, f"deviation.{stage}")
    label_tensor = torch.from_numpy(labels.astype(np.float64))

    last = None
    steps = 0
    for epoch in range(1, epochs + 1):
        losses = []
        batches = sampler.balanced_epoch(labels) if balanced else sampler.epoch(with_pairs=False)
        for batch in batches:
            z = bundle.embed(graph, batch.neighborhood)[batch.centre_index]
            scores = bundle.head(z)
            loss = deviation_loss(scores, label_tensor[batch.centres], cfg.deviation, reference)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
            steps += 1
            logger.debug(f"[{stage}] step {steps}: deviation={losses[-1]:.6f}")
        last = float(np.mean(losses))
        _epoch_log(stage, epoch, epochs, cfg.seed, deviation=last)

    return StageSummary(stage=stage, epochs=epochs, steps=steps, final_loss=last)


def pretrain_source(graph: AttributedGraph, cfg: TrainConfig) -> ModelBundle:
    """
    Train psi_s and eta_s by deviation loss on labelled source nodes

    Returns:
        ModelBundle: frozen source bundle (``summary`` attribute attached)

    Raises:
        ConfigError: missing or single-class labels
    """
    _check_source_labels(graph)
    bundle = build_source_bundle(graph, cfg)
    pool = labelled_subset(graph, cfg.labelled_fraction, cfg.seed)
    logger.info(
        f"Pretraining source on {pool.size} labelled nodes "
        f"({int(graph.labels[pool].sum())} anomalies)",
        extra={"stage": "pretrain", "seed": cfg.seed},
    )
    summary = _fit_deviation(
        bundle, graph, pool, graph.labels, cfg.source_epochs, cfg.source_lr, cfg, "pretrain",
        balanced=cfg.balanced_deviation_batches,
    )
    summary.details["labelled_nodes"] = int(pool.size)
    bundle.freeze()
    bundle.summary = summary
    return bundle


@torch.no_grad()
def embed_all(
    encoder: SageEncoder,
    graph: AttributedGraph,
    cfg: TrainConfig,
    stream: str = "score",
    nodes: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Embeddings of ``nodes`` (default: every node) with a fixed fanout stream."""
    rng = numpy_rng(cfg.seed, stream)
    nodes = np.arange(graph.num_nodes) if nodes is None else np.asarray(nodes, dtype=np.int64)
    bundle = ModelBundle(encoder, None, graph.domain)
    chunks = []
    for start in range(0, nodes.size, SCORING_CHUNK):
        neighborhood = sample_fanout(graph, nodes[start:start + SCORING_CHUNK], cfg.hop_fanouts(), rng)
        chunks.append(bundle.embed(graph, neighborhood).numpy())
    if not chunks:
        return np.empty((0, encoder.output_dim))
    return np.concatenate(chunks)


@torch.no_grad()
def score_target(bundle: ModelBundle, graph: AttributedGraph, cfg: TrainConfig, provenance: str = "eta_t") -> ScoreVector:
    """phi(v) = eta(psi(v)) for every node of ``graph``."""
    z = torch.from_numpy(embed_all(bundle.encoder, graph, cfg))
    return ScoreVector.over_graph(bundle.head(z).numpy(), provenance)


def _one_class_pool(graph: AttributedGraph, cfg: TrainConfig) -> np.ndarray:
    if not cfg.one_class_source_batches:
        return np.arange(graph.num_nodes)
    labelled = labelled_subset(graph, cfg.labelled_fraction, cfg.seed)
    return labelled[graph.labels[labelled] == 0]


class _Monitor:
    """Fixed source-normal and target node sets for tracking the divergence."""

    def __init__(self, source: ModelBundle, g_s: AttributedGraph, g_t: AttributedGraph, pool: np.ndarray, cfg: TrainConfig):
        size_s = min(cfg.monitor_size, pool.size)
        size_t = min(cfg.monitor_size, g_t.num_nodes)
        self.source_nodes = np.sort(pool[numpy_rng(cfg.seed, "monitor.source").permutation(pool.size)[:size_s]])
        self.target_nodes = np.sort(numpy_rng(cfg.seed, "monitor.target").permutation(g_t.num_nodes)[:size_t])
        self.g_t = g_t
        self.cfg = cfg
        self.z_s = torch.from_numpy(embed_all(source.encoder, g_s, cfg, "monitor.fanout.source", self.source_nodes))

    def target_embeddings(self, encoder: SageEncoder) -> np.ndarray:
        return embed_all(encoder, self.g_t, self.cfg, "monitor.fanout.target", self.target_nodes)

    @torch.no_grad()
    def divergence(self, encoder: SageEncoder) -> float:
        z_t = torch.from_numpy(self.target_embeddings(encoder))
        return float(sinkhorn_divergence(self.z_s, z_t, self.cfg.sinkhorn).value)


def joint_align(
    source: ModelBundle,
    g_s: AttributedGraph,
    g_t: AttributedGraph,
    cfg: TrainConfig,
    objective: Objective = "joint",
) -> AlignmentResult:
    """
    Train psi_t against a frozen psi_s

    Each epoch reshuffles both loaders and runs min(n_s_batches, n_t_batches)
    steps. A step encodes B_s with psi_s (no gradient) and B_t with psi_t,
    then takes one ADAM step on L_dom(Z_s, Z_t) followed by one on L_con(Z_t).
    ``con_only`` / ``dom_only`` keep only one of the two steps.

    Returns:
        AlignmentResult: aligned encoder, report (trace of the monitored
            divergence when L_dom is optimised) and monitor snapshots
    """
    use_dom = objective in ("joint", "dom_only")
    use_con = objective in ("joint", "con_only")
    pool = _one_class_pool(g_s, cfg)
    if pool.size == 0:
        raise ConfigError("no labelled-normal source nodes available for one-class alignment")

    encoder = build_target_encoder(g_t, cfg)
    target = ModelBundle(encoder, None, "target")
    source_sampler = _sampler(g_s, cfg, "sampler.align.source", pool=pool)
    target_sampler = _sampler(g_t, cfg, "sampler.align.target")
    optimizer = AdamOptimizer(encoder.parameters(), lr=cfg.align_lr)
    steps_per_epoch = min(source_sampler.batches_per_epoch, target_sampler.batches_per_epoch)
    pool_mask = np.zeros(g_s.num_nodes, dtype=bool)
    pool_mask[pool] = True
    source_pairs = cfg.align_on == "batch"

    report = AlignmentReport(objective=objective, epochs=cfg.align_epochs, steps_per_epoch=steps_per_epoch)
    monitor = _Monitor(source, g_s, g_t, pool, cfg) if (use_dom or cfg.snapshot_epochs) else None
    snapshots: Dict[int, Dict[str, np.ndarray]] = {}

    def snapshot(epoch: int) -> None:
        if monitor is not None and epoch in cfg.snapshot_epochs:
            snapshots[epoch] = {
                "source_nodes": monitor.source_nodes,
                "source": monitor.z_s.numpy(),
                "target_nodes": monitor.target_nodes,
                "target": monitor.target_embeddings(encoder),
            }

    if use_dom:
        report.trace.append(monitor.divergence(encoder))
    snapshot(0)
    sinkhorn_seconds = 0.0

    for epoch in range(1, cfg.align_epochs + 1):
        dom_losses: List[float] = []
        con_losses: List[float] = []
        batches = zip(source_sampler.epoch(with_pairs=source_pairs), target_sampler.epoch(with_pairs=True))
        for _, (batch_s, batch_t) in zip(range(steps_per_epoch), batches):
            if use_dom:
                with torch.no_grad():
                    z_s = source.embed(g_s, batch_s.neighborhood)
                if source_pairs:
                    z_s = z_s[torch.from_numpy(pool_mask[batch_s.nodes])]
                else:
                    z_s = z_s[batch_s.centre_index]

                z_t = target.embed(g_t, batch_t.neighborhood)
                if not source_pairs:
                    z_t = z_t[batch_t.centre_index]

                started = time.perf_counter()
                result = sinkhorn_divergence(z_s, z_t, cfg.sinkhorn)
                optimizer.zero_grad()
                result.value.backward()
                sinkhorn_seconds += time.perf_counter() - started
                optimizer.step()
                report.sinkhorn_solves += 1
                report.sinkhorn_unconverged += int(not result.converged)
                dom_losses.append(float(result.value.detach()))

            if use_con:
                z = target.embed(g_t, batch_t.neighborhood)
                loss = contrastive_loss(
                    z[batch_t.centre_index],
                    z[batch_t.positive_index],
                    z[batch_t.negative_index],
                    cfg.sampler.negatives,
                )
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                con_losses.append(float(loss.detach()))

            if logger.isEnabledFor(logging.DEBUG):
                logger.debug(
                    f"[align:{objective}] epoch {epoch} step {len(dom_losses or con_losses)}: "
                    f"dom={dom_losses[-1] if dom_losses else float('nan'):.6f} "
                    f"con={con_losses[-1] if con_losses else float('nan'):.6f}"
                )

        values = {}
        if dom_losses:
            values["dom"] = float(np.mean(dom_losses))
        if con_losses:
            values["con"] = float(np.mean(con_losses))
        if use_dom:
            values["monitor_divergence"] = monitor.divergence(encoder)
            report.trace.append(values["monitor_divergence"])
        report.final_losses = values
        _epoch_log(f"align:{objective}", epoch, cfg.align_epochs, cfg.seed, **values)
        snapshot(epoch)

    if use_dom:
        report.sinkhorn_seconds = sinkhorn_seconds
        if report.sinkhorn_unconverged:
            logger.warning(
                f"{report.sinkhorn_unconverged}/{report.sinkhorn_solves} Sinkhorn solves hit "
                f"max_iterations={cfg.sinkhorn.max_iterations}",
                extra={"stage": "align", "seed": cfg.seed},
            )
    return AlignmentResult(encoder=encoder, report=report, snapshots=snapshots)


def deviation_refit(
    g_t: AttributedGraph,
    pseudo: PseudoLabelSet,
    encoder: SageEncoder,
    cfg: TrainConfig,
) -> ModelBundle:
    """
    Deviation-loss training on pseudo-labelled target nodes only

    psi_t starts from a copy of ``encoder``; eta_t starts at zero so every
    node scores mu before the first step.
    With ``refit_epochs = 0`` the copy and the untrained head are returned.

    Raises:
        DegenerateSelectionError: empty pseudo-anomaly set
    """
    if pseudo.anomalies.size == 0:
        raise DegenerateSelectionError("refit needs at least one pseudo anomaly; decrease alpha")

    bundle = ModelBundle(
        copy.deepcopy(encoder),
        ScoreHead.zeros(cfg.embedding_dim),
        "target",
    )
    for p in bundle.parameters():
        p.requires_grad_(True)

    labels = np.zeros(g_t.num_nodes, dtype=np.int64)
    labels[pseudo.anomalies] = 1
    pool = np.sort(pseudo.nodes())
    logger.info(
        f"Refitting on {pseudo.anomalies.size} pseudo anomalies and {pseudo.normals.size} pseudo normals",
        extra={"stage": "selflabel", "seed": cfg.seed},
    )
    if cfg.refit_epochs > 0:
        bundle.summary = _fit_deviation(
            bundle, g_t, pool, labels, cfg.refit_epochs, cfg.refit_lr, cfg, "refit",
            balanced=cfg.balanced_deviation_batches,
        )
    else:
        bundle.summary = StageSummary(stage="refit", epochs=0, steps=0)
    bundle.freeze()
    return bundle


def source_score_gap(bundle: ModelBundle, graph: AttributedGraph, cfg: TrainConfig) -> float:
    """Mean score of labelled anomalies minus mean score of labelled normals."""
    scores = score_target(bundle, graph, cfg, provenance="eta_s").scores
    return float(scores[graph.labels == 1].mean() - scores[graph.labels == 0].mean())


def eta_s_scores(source: ModelBundle, encoder: SageEncoder, g_t: AttributedGraph, cfg: TrainConfig) -> ScoreVector:
    """eta_s applied to psi_t embeddings of every target node."""
    return score_target(ModelBundle(encoder, source.head, "target"), g_t, cfg, provenance="eta_s")

