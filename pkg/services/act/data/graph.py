"""
Attributed Graph Module

Immutable undirected attributed graph plus degree-capping preprocessing.
"""

import logging
from dataclasses import dataclass, field
from typing import Iterable, Literal, Optional

import numpy as np
import scipy.sparse as sp

from ..core.exceptions import DataError, StructuralError
from ..utils.seeding import numpy_rng

logger = logging.getLogger(__name__)

Domain = Literal["source", "target"]


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class AttributedGraph:
    """
    Undirected attributed graph G = (V, E, X)

    Attributes:
        adjacency: Symmetric CSR matrix with unit entries, sorted indices
        features: n x d float64 feature matrix
        labels: Training-visible 0/1 labels (1 = anomaly), or None
        domain: "source" or "target"
        heldout_labels: Labels reserved for evaluation; read them through
            ``evaluation_labels()`` only

    Raises:
        StructuralError: asymmetric adjacency, self loops, duplicate edges,
            feature/label row mismatch or non-binary labels
    """

    adjacency: sp.csr_matrix
    features: np.ndarray
    labels: Optional[np.ndarray] = None
    domain: Domain = "source"
    heldout_labels: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        adjacency = sp.csr_matrix(self.adjacency, dtype=np.float64, copy=True)
        adjacency.sum_duplicates()
        adjacency.eliminate_zeros()
        adjacency.sort_indices()
        n = adjacency.shape[0]

        if adjacency.shape != (n, n):
            raise StructuralError(f"adjacency must be square, got {adjacency.shape}")
        if adjacency.diagonal().any():
            raise StructuralError("adjacency has self loops")
        if adjacency.nnz and not np.all(adjacency.data == 1.0):
            raise StructuralError("adjacency has duplicate or weighted edges")
        if (adjacency != adjacency.T).nnz:
            raise StructuralError("adjacency is not symmetric")

        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] != n:
            raise StructuralError(f"features have shape {features.shape}, expected ({n}, d)")
        if not np.all(np.isfinite(features)):
            raise StructuralError("features contain non-finite values")

        object.__setattr__(self, "adjacency", adjacency)
        object.__setattr__(self, "features", _frozen(features))
        for name in ("labels", "heldout_labels"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, _frozen(self._check_labels(value, n)))

    @staticmethod
    def _check_labels(labels, n: int) -> np.ndarray:
        labels = np.asarray(labels)
        if labels.shape != (n,):
            raise StructuralError(f"labels have shape {labels.shape}, expected ({n},)")
        if not np.isin(labels, (0, 1)).all():
            raise StructuralError("labels must be 0 or 1")
        return labels.astype(np.int64)

    @classmethod
    def from_edges(
        cls,
        num_nodes: int,
        edges: Iterable,
        features: np.ndarray,
        labels: Optional[np.ndarray] = None,
        domain: Domain = "source",
        heldout: bool = False,
    ) -> "AttributedGraph":
        """
        Build from an edge list; edges are symmetrised and deduplicated,
        self loops dropped.

        Args:
            heldout: Store ``labels`` as evaluation-only labels
        """
        edges = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
        edges = edges.reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= num_nodes):
            bad = edges[(edges < 0).any(axis=1) | (edges >= num_nodes).any(axis=1)][0]
            raise StructuralError(
                f"edge ({bad[0]}, {bad[1]}) references a node outside [0, {num_nodes})"
            )
        edges = edges[edges[:, 0] != edges[:, 1]]
        rows = np.concatenate([edges[:, 0], edges[:, 1]])
        cols = np.concatenate([edges[:, 1], edges[:, 0]])
        adjacency = sp.coo_matrix(
            (np.ones(rows.size), (rows, cols)), shape=(num_nodes, num_nodes)
        ).tocsr()
        adjacency.sum_duplicates()
        adjacency.data[:] = 1.0
        if heldout:
            return cls(adjacency, features, None, domain, labels)
        return cls(adjacency, features, labels, domain)

    @property
    def num_nodes(self) -> int:
        return self.adjacency.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_edges(self) -> int:
        return self.adjacency.nnz // 2

    @property
    def indptr(self) -> np.ndarray:
        return self.adjacency.indptr

    @property
    def indices(self) -> np.ndarray:
        return self.adjacency.indices

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.adjacency.indptr)

    def neighbors(self, node: int) -> np.ndarray:
        return self.indices[self.indptr[node]:self.indptr[node + 1]]

    def edge_array(self) -> np.ndarray:
        """Each undirected edge once as (u, v) with u < v, lexicographically sorted."""
        upper = sp.triu(self.adjacency, k=1).tocoo()
        order = np.lexsort((upper.col, upper.row))
        return np.stack([upper.row[order], upper.col[order]], axis=1).astype(np.int64)

    def are_adjacent(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Vectorised edge lookup for node-id pairs."""
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v, dtype=np.int64)
        keys = self._edge_keys()
        query = u * self.num_nodes + v
        if keys.size == 0:
            return np.zeros(query.shape, dtype=bool)
        pos = np.minimum(np.searchsorted(keys, query), keys.size - 1)
        return keys[pos] == query

    def _edge_keys(self) -> np.ndarray:
        cached = self.__dict__.get("_keys")
        if cached is None:
            rows = np.repeat(np.arange(self.num_nodes, dtype=np.int64), self.degrees)
            cached = rows * self.num_nodes + self.indices.astype(np.int64)
            object.__setattr__(self, "_keys", cached)
        return cached

    @property
    def has_labels(self) -> bool:
        return self.labels is not None

    def evaluation_labels(self) -> np.ndarray:
        """Labels for scoring metrics; prefers held-out labels."""
        if self.heldout_labels is not None:
            return self.heldout_labels
        if self.labels is not None:
            return self.labels
        raise DataError(f"{self.domain} graph has no labels to evaluate against")

    def subgraph(self, keep: np.ndarray) -> "AttributedGraph":
        """Induced subgraph on ``keep`` (sorted), node ids re-indexed."""
        keep = np.sort(np.asarray(keep, dtype=np.int64))
        adjacency = self.adjacency[keep][:, keep]
        return AttributedGraph(
            adjacency,
            self.features[keep],
            None if self.labels is None else self.labels[keep],
            self.domain,
            None if self.heldout_labels is None else self.heldout_labels[keep],
        )


def cap_degree(graph: AttributedGraph, max_degree: int, seed: int) -> AttributedGraph:
    """
    Limit every node to at most ``max_degree`` incident edges

    Nodes are visited in a seeded random order; an over-degree node keeps a
    uniform random subset of its remaining incident edges. Isolated nodes
    are dropped afterwards and labels re-indexed with them.

    Args:
        graph: Input graph
        max_degree: Degree cap (>= 1)
        seed: Run seed; draws come from the "cap_degree" sub-stream

    Returns:
        AttributedGraph: capped graph with no isolated nodes
    """
    if max_degree < 1:
        raise ValueError("max_degree must be >= 1")

    rng = numpy_rng(seed, "cap_degree")
    adjacency = graph.adjacency.tolil(copy=True)
    degrees = graph.degrees.copy()
    removed = 0

    for node in rng.permutation(graph.num_nodes):
        excess = degrees[node] - max_degree
        if excess <= 0:
            continue
        incident = np.asarray(adjacency.rows[node], dtype=np.int64)
        for other in rng.choice(incident, size=excess, replace=False):
            adjacency[node, other] = 0
            adjacency[other, node] = 0
            degrees[node] -= 1
            degrees[other] -= 1
        removed += excess

    capped = sp.csr_matrix(adjacency)
    capped.eliminate_zeros()
    result = AttributedGraph(capped, graph.features, graph.labels, graph.domain, graph.heldout_labels)

    keep = np.flatnonzero(result.degrees > 0)
    if keep.size < result.num_nodes:
        logger.info(
            f"Dropping {result.num_nodes - keep.size} isolated {graph.domain} nodes"
        )
        result = result.subgraph(keep)

    if removed:
        logger.info(f"Capped {graph.domain} graph at degree {max_degree}: removed {removed} edges")
    return result
