"""
Ablation variants.

Every variant shares the pretrained source bundle and, where the objective
matches, the aligned target encoder of one ``ExperimentRun``; only the
alignment objective, the self-labelling detector and whether a deviation
refit follows differ.

The alignment-objective rows (``joint``, ``con_only``, ``dom_only``) score
the target with the frozen source head over the aligned encoder, so
``joint`` and ``eta_s`` are the same scores.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, Optional, Tuple

from ..core.exceptions import MissingStageError
from ..data.graph import AttributedGraph
from ..detectors.iforest import isolation_scores
from ..evaluation.metrics import evaluate_scores
from ..models.encoder import ModelBundle, SageEncoder
from ..schemas.config import TrainConfig
from ..schemas.reports import MetricsReport
from .pipeline import (
    AlignmentResult,
    Objective,
    build_target_encoder,
    deviation_refit,
    embed_all,
    eta_s_scores,
    joint_align,
    pretrain_source,
    score_target,
)
from .selflabel import PseudoLabelSet, ScoreVector, self_label

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Variant:
    """
    One row of an ablation table

    Attributes:
        objective: Alignment objective, or None when no source transfer is used
        detector: Self-labelling / scoring detector; None means ``cfg.detector``
        refit: Whether self-labelling deviation refit produces the final scores
    """

    name: str
    objective: Optional[Objective]
    detector: Optional[str]
    refit: bool
    description: str = ""


VARIANTS: Dict[str, Variant] = {
    v.name: v
    for v in (
        Variant("full", "joint", None, True, "complete ACT"),
        Variant("joint", "joint", "eta_s", False, "contrastive + Sinkhorn alignment, scored by eta_s"),
        Variant("con_only", "con_only", "eta_s", False, "contrastive loss only during alignment, scored by eta_s"),
        Variant("dom_only", "dom_only", "eta_s", False, "Sinkhorn alignment loss only, scored by eta_s"),
        Variant("eta_s", "joint", "eta_s", False, "frozen eta_s on aligned target embeddings"),
        Variant("act_if", "joint", "iforest", False, "Isolation Forest on aligned target embeddings"),
        Variant("selflabel_eta_s", "joint", "eta_s", True, "ACT with eta_s as the self-labelling detector"),
        Variant("raw_if", None, "raw_iforest", False, "Isolation Forest on raw target features"),
        Variant("raw_if_dev", None, "raw_iforest", True, "target-only self-labelled deviation learning"),
    )
}


def get_variant(name: str) -> Variant:
    try:
        return VARIANTS[name]
    except KeyError:
        raise ValueError(f"unknown variant '{name}'; choose from {', '.join(VARIANTS)}")


@dataclass
class VariantOutcome:
    variant: str
    scores: ScoreVector
    metrics: Optional[MetricsReport]
    pseudo: Optional[PseudoLabelSet] = None
    bundle: Optional[ModelBundle] = None
    encoder: Optional[SageEncoder] = None


StageHook = Callable[[str, object], None]


class ExperimentRun:
    """
    Lazily computed stages of one (data, seed) experiment

    Stages are computed on first use and cached. Callers may seed the cache
    with restored checkpoints; stages outside ``trainable`` must be seeded,
    otherwise ``MissingStageError`` is raised.

    Args:
        g_s: Labelled source graph
        g_t: Target graph (labels, if any, are used for metrics only)
        cfg: Train configuration for this seed
        source: Restored pretrain bundle
        aligned: Restored aligned encoders keyed by objective
        trainable: Stages that may be computed here ("pretrain", "align", "selflabel")
        on_stage: Called with (stage key, result) after each computed stage
    """

    def __init__(
        self,
        g_s: AttributedGraph,
        g_t: AttributedGraph,
        cfg: TrainConfig,
        source: Optional[ModelBundle] = None,
        aligned: Optional[Dict[str, SageEncoder]] = None,
        trainable: Iterable[str] = ("pretrain", "align", "selflabel"),
        on_stage: Optional[StageHook] = None,
    ):
        self.g_s = g_s
        self.g_t = g_t
        self.cfg = cfg
        self._source = source
        self._aligned: Dict[str, SageEncoder] = dict(aligned or {})
        self.alignments: Dict[str, AlignmentResult] = {}
        self.trainable = set(trainable)
        self.on_stage = on_stage
        self._detector_cache: Dict[Tuple, ScoreVector] = {}
        self._outcome_cache: Dict[Tuple, VariantOutcome] = {}

    def _emit(self, stage: str, result) -> None:
        if self.on_stage is not None:
            self.on_stage(stage, result)

    @property
    def has_source(self) -> bool:
        return self._source is not None

    def pretrain(self) -> ModelBundle:
        return self.source

    @property
    def source(self) -> ModelBundle:
        if self._source is None:
            if "pretrain" not in self.trainable:
                raise MissingStageError("pretrain")
            self._source = pretrain_source(self.g_s, self.cfg)
            self._emit("pretrain", self._source)
        return self._source

    def aligned(self, objective: Objective) -> SageEncoder:
        if objective not in self._aligned:
            # Alignment starts from psi_s, so a missing pretrain is reported first.
            source = self.source
            if "align" not in self.trainable:
                raise MissingStageError("align", f"missing alignment checkpoint for objective '{objective}'; run --stage align first")
            result = joint_align(source, self.g_s, self.g_t, self.cfg, objective)
            self._aligned[objective] = result.encoder
            self.alignments[objective] = result
            self._emit(f"align/{objective}", result)
        return self._aligned[objective]

    def detector_scores(self, detector: str, objective: Optional[Objective]) -> ScoreVector:
        """Scores of the self-labelling detector (before any refit)."""
        key = (detector, objective)
        if key not in self._detector_cache:
            if detector == "raw_iforest":
                raw = isolation_scores(self.g_t.features, self.cfg.forest, self.cfg.forest_seed)
                scores = ScoreVector.over_graph(raw, "iforest_raw")
            elif detector == "iforest":
                z = embed_all(self.aligned(objective), self.g_t, self.cfg)
                scores = ScoreVector.over_graph(isolation_scores(z, self.cfg.forest, self.cfg.forest_seed), "iforest")
            elif detector == "eta_s":
                scores = eta_s_scores(self.source, self.aligned(objective), self.g_t, self.cfg)
            else:
                raise ValueError(f"unknown detector '{detector}'")
            self._detector_cache[key] = scores
        return self._detector_cache[key]

    def _metrics(self, scores: ScoreVector, variant: str) -> Optional[MetricsReport]:
        if self.g_t.heldout_labels is None and self.g_t.labels is None:
            return None
        return evaluate_scores(scores.scores, self.g_t.evaluation_labels(), seed=self.cfg.seed, variant=variant)

    def run_variant(self, variant: Variant, alpha: Optional[float] = None, q: Optional[float] = None) -> VariantOutcome:
        """
        Final target scores and metrics for one variant

        Raises:
            DegenerateSelectionError: self-labelling selected no pseudo anomalies
            MissingStageError: a required stage is neither cached nor trainable
        """
        alpha = self.cfg.alpha if alpha is None else alpha
        q = self.cfg.q if q is None else q
        detector = variant.detector or self.cfg.detector
        key = (variant.objective, detector, variant.refit, alpha if variant.refit else None, q if variant.refit else None)

        if key not in self._outcome_cache:
            encoder = self.aligned(variant.objective) if variant.objective is not None else None
            scores = self.detector_scores(detector, variant.objective)
            pseudo = bundle = None
            if variant.refit:
                if "selflabel" not in self.trainable:
                    raise MissingStageError("selflabel")
                pseudo = self_label(scores, alpha, q)
                init = encoder if encoder is not None else build_target_encoder(self.g_t, self.cfg)
                bundle = deviation_refit(self.g_t, pseudo, init, self.cfg)
                scores = score_target(bundle, self.g_t, self.cfg)
                encoder = bundle.encoder
            self._outcome_cache[key] = VariantOutcome(
                variant=variant.name, scores=scores, metrics=None, pseudo=pseudo, bundle=bundle, encoder=encoder
            )

        cached = self._outcome_cache[key]
        outcome = VariantOutcome(
            variant=variant.name,
            scores=cached.scores,
            metrics=self._metrics(cached.scores, variant.name),
            pseudo=cached.pseudo,
            bundle=cached.bundle,
            encoder=cached.encoder,
        )
        if outcome.metrics is not None:
            logger.info(
                f"[{variant.name}] AUC-ROC {outcome.metrics.auc_roc:.4f}, AUC-PR {outcome.metrics.auc_pr:.4f}",
                extra={"seed": self.cfg.seed, "variant": variant.name},
            )
        return outcome


def run_ablation(
    g_s: AttributedGraph,
    g_t: AttributedGraph,
    cfg: TrainConfig,
    variants: Iterable[str] = ("full", "con_only", "dom_only", "eta_s", "act_if"),
) -> Dict[str, VariantOutcome]:
    """Run every named variant on one seed, sharing stages between them."""
    run = ExperimentRun(g_s, g_t, cfg)
    return {name: run.run_variant(get_variant(name)) for name in variants}

