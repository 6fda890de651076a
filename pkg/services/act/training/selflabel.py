"""
Self-labelling.

Pseudo anomalies are the nodes whose detector score exceeds
mean + alpha * std (population std, strict inequality), the one-sided
Chebyshev (Cantelli) bound. Pseudo normals are the bottom q percent of nodes
by nearest rank, ties broken by node id.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from ..core.exceptions import DegenerateSelectionError, StructuralError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScoreVector:
    """Per-node anomaly scores (higher = more anomalous) and their provenance."""

    scores: np.ndarray
    nodes: np.ndarray
    provenance: str

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        nodes = np.asarray(self.nodes, dtype=np.int64)
        if scores.shape != nodes.shape:
            raise StructuralError(f"{scores.size} scores for {nodes.size} nodes")
        if not np.all(np.isfinite(scores)):
            raise StructuralError(f"{self.provenance} produced non-finite scores")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def over_graph(cls, scores, provenance: str) -> "ScoreVector":
        scores = np.asarray(scores, dtype=np.float64)
        return cls(scores, np.arange(scores.size), provenance)

    def __len__(self) -> int:
        return self.scores.size

    @property
    def mean(self) -> float:
        return float(self.scores.mean())

    @property
    def std(self) -> float:
        return float(self.scores.std())


@dataclass(frozen=True)
class PseudoLabelSet:
    """Disjoint pseudo-anomaly (O_out) and pseudo-normal node sets."""

    anomalies: np.ndarray
    normals: np.ndarray
    threshold: float
    percentile: float
    details: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if np.intersect1d(self.anomalies, self.normals).size:
            raise DegenerateSelectionError("pseudo anomalies and pseudo normals overlap")
        if self.normals.size == 0:
            raise DegenerateSelectionError("no pseudo normals selected; increase q")

    def nodes(self) -> np.ndarray:
        return np.concatenate([self.anomalies, self.normals])

    def labels(self) -> np.ndarray:
        return np.concatenate([np.ones(self.anomalies.size, dtype=np.int64), np.zeros(self.normals.size, dtype=np.int64)])

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "percentile": self.percentile,
            "anomalies": self.anomalies.tolist(),
            "normals": self.normals.tolist(),
            **self.details,
        }


def cantelli_threshold(scores: np.ndarray, alpha: float) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    return float(scores.mean() + alpha * scores.std())


def nearest_rank_bottom(scores: np.ndarray, nodes: np.ndarray, q: float) -> np.ndarray:
    """The ceil(q/100 * n) lowest-scoring nodes; equal scores ordered by node id."""
    k = max(1, math.ceil(q / 100.0 * scores.size))
    order = np.lexsort((nodes, scores))
    return np.sort(nodes[order[:k]])


def self_label(scores: ScoreVector, alpha: float, q: float) -> PseudoLabelSet:
    """
    Cantelli pseudo anomalies plus bottom-q pseudo normals

    Args:
        scores: Detector scores over all target nodes
        alpha: Threshold width in standard deviations (> 0)
        q: Pseudo-normal percentile in (0, 100)

    Raises:
        DegenerateSelectionError: no node clears the threshold, or the two
            sets would overlap
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if not 0 < q < 100:
        raise ValueError("q must lie in (0, 100)")

    threshold = cantelli_threshold(scores.scores, alpha)
    anomalies = np.sort(scores.nodes[scores.scores > threshold])
    if anomalies.size == 0:
        raise DegenerateSelectionError(
            f"no score exceeds mean + {alpha} * std = {threshold:.6g} "
            f"({scores.provenance}); decrease alpha"
        )

    normals = nearest_rank_bottom(scores.scores, scores.nodes, q)
    percentile = float(scores.scores[np.isin(scores.nodes, normals)].max())
    if np.intersect1d(anomalies, normals).size:
        raise DegenerateSelectionError(
            f"pseudo anomalies overlap the bottom {q}% at alpha {alpha}; increase alpha or lower q"
        )

    logger.info(
        f"Self-labelling ({scores.provenance}): {anomalies.size} pseudo anomalies above "
        f"{threshold:.4f}, {normals.size} pseudo normals at or below {percentile:.4f}"
    )
    return PseudoLabelSet(
        anomalies=anomalies,
        normals=normals,
        threshold=threshold,
        percentile=percentile,
        details={"alpha": alpha, "q": q, "mean": scores.mean, "std": scores.std},
    )
