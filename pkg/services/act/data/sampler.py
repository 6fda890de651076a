"""
Minibatch Sampler Module

Builds the node batches consumed by the encoder and the contrastive loss:
centre nodes, one first-order positive per centre, Q non-neighbour
negatives per centre, and the per-hop fanout blocks needed for message
passing.

Fanout blocks follow the GraphSAGE convention: starting from the output
nodes, each hop samples up to ``fanout`` distinct neighbours per node and
the union of the frontier and its samples becomes the next (input-side)
node set.
"""

from dataclasses import dataclass
from typing import Iterator, List, Literal, Optional, Sequence

import numpy as np
import torch

from ..core.exceptions import DegenerateGraphError
from ..engine.diffcore import DTYPE
from .graph import AttributedGraph

NEGATIVE_DEGREE_POWER = 0.75


@dataclass(frozen=True)
class Block:
    """
    One message-passing hop

    ``aggregator`` is a sparse |dst| x |src| row-stochastic matrix averaging
    each destination node with its sampled neighbours. Destination nodes are
    the first |dst| entries of ``src_nodes``.
    """

    src_nodes: np.ndarray
    dst_nodes: np.ndarray
    aggregator: torch.Tensor

    @property
    def num_src(self) -> int:
        return self.src_nodes.size

    @property
    def num_dst(self) -> int:
        return self.dst_nodes.size


@dataclass(frozen=True)
class SampledNeighborhood:
    """Blocks ordered from the input layer to the output layer."""

    blocks: List[Block]

    @property
    def input_nodes(self) -> np.ndarray:
        return self.blocks[0].src_nodes

    @property
    def output_nodes(self) -> np.ndarray:
        return self.blocks[-1].dst_nodes


@dataclass(frozen=True)
class NodeBatch:
    """
    Centres B^u, positives B^v, negatives B^{v_n} and their sampled
    neighbourhood

    ``nodes`` is the deduplicated union of all three roles in first-seen
    order; ``*_index`` arrays point into it (and into the encoder output).
    Negatives are centre-major: rows [i*Q, (i+1)*Q) belong to centre i.
    """

    centres: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray
    nodes: np.ndarray
    centre_index: np.ndarray
    positive_index: np.ndarray
    negative_index: np.ndarray
    neighborhood: SampledNeighborhood

    @property
    def size(self) -> int:
        return self.centres.size

    @property
    def num_negatives(self) -> int:
        return self.negatives.size // max(self.centres.size, 1)


def _sample_neighbors(
    graph: AttributedGraph,
    nodes: np.ndarray,
    fanout: Optional[int],
    rng: np.random.Generator,
) -> List[np.ndarray]:
    """Per node, min(fanout, degree) distinct neighbours uniformly without replacement."""
    indptr, indices = graph.indptr, graph.indices
    starts, ends = indptr[nodes], indptr[nodes + 1]
    degrees = ends - starts
    segments = [indices[s:e] for s, e in zip(starts, ends)]
    if fanout is None or not np.any(degrees > fanout):
        return segments

    # Random keys sorted within each segment give a uniform subset of size fanout.
    over = np.flatnonzero(degrees > fanout)
    keys = rng.random(int(degrees[over].sum()))
    offset = 0
    for i in over:
        d = degrees[i]
        order = np.argsort(keys[offset:offset + d], kind="stable")[:fanout]
        segments[i] = np.sort(segments[i][order])
        offset += d
    return segments


def sample_fanout(
    graph: AttributedGraph,
    nodes: Sequence[int],
    fanouts: Sequence[Optional[int]],
    rng: np.random.Generator,
) -> SampledNeighborhood:
    """
    Sample layered neighbourhoods for ``nodes``

    Args:
        graph: Graph to sample from
        nodes: Output nodes (encoder rows), order preserved
        fanouts: Per hop counted outward from the output layer; None keeps
            every neighbour
        rng: Sampling stream

    Returns:
        SampledNeighborhood with len(fanouts) blocks
    """
    frontier = np.asarray(nodes, dtype=np.int64)
    blocks: List[Block] = []
    for fanout in fanouts:
        sampled = _sample_neighbors(graph, frontier, fanout, rng)

        position = {int(v): i for i, v in enumerate(frontier)}
        src = list(frontier)
        rows, cols, vals = [], [], []
        for i, neighbours in enumerate(sampled):
            weight = 1.0 / (1 + neighbours.size)
            rows.append(i)
            cols.append(i)
            vals.append(weight)
            for u in neighbours:
                u = int(u)
                j = position.get(u)
                if j is None:
                    j = len(src)
                    position[u] = j
                    src.append(u)
                rows.append(i)
                cols.append(j)
                vals.append(weight)

        src_nodes = np.asarray(src, dtype=np.int64)
        aggregator = torch.sparse_coo_tensor(
            torch.tensor([rows, cols], dtype=torch.int64),
            torch.tensor(vals, dtype=DTYPE),
            size=(frontier.size, src_nodes.size),
        ).coalesce()
        blocks.append(Block(src_nodes=src_nodes, dst_nodes=frontier, aggregator=aggregator))
        frontier = src_nodes

    blocks.reverse()
    return SampledNeighborhood(blocks)


class NeighborSampler:
    """
    Per-graph batch sampler owning one RNG stream

    Args:
        graph: Graph without isolated nodes
        batch_size: Centres per batch (the last batch of an epoch may be partial)
        negatives: Q, negatives per centre
        fanouts: Per-hop fanouts counted outward from the output layer
        rng: Sampling stream; the sampler is its only consumer
        negative_distribution: "uniform" over non-neighbours or "degree"
            weighted by deg^0.75
        pool: Nodes eligible as centres (defaults to all nodes)
    """

    def __init__(
        self,
        graph: AttributedGraph,
        batch_size: int,
        negatives: int,
        fanouts: Sequence[Optional[int]],
        rng: np.random.Generator,
        negative_distribution: Literal["uniform", "degree"] = "uniform",
        pool: Optional[np.ndarray] = None,
    ):
        if batch_size < 1 or negatives < 1:
            raise ValueError("batch_size and negatives must be >= 1")
        self.graph = graph
        self.batch_size = batch_size
        self.negatives = negatives
        self.fanouts = list(fanouts)
        self.rng = rng
        self.pool = np.arange(graph.num_nodes) if pool is None else np.asarray(pool, dtype=np.int64)

        if negative_distribution == "degree":
            weights = graph.degrees.astype(np.float64) ** NEGATIVE_DEGREE_POWER
            self._negative_cdf = np.cumsum(weights) / weights.sum()
        else:
            self._negative_cdf = None

    @property
    def batches_per_epoch(self) -> int:
        return -(-self.pool.size // self.batch_size)

    def epoch(self, with_pairs: bool = True) -> Iterator[NodeBatch]:
        """Yield one epoch of batches; centres follow a fresh permutation of the pool."""
        order = self.pool[self.rng.permutation(self.pool.size)]
        for start in range(0, order.size, self.batch_size):
            yield self.sample_batch(order[start:start + self.batch_size], with_pairs=with_pairs)

    def balanced_epoch(self, labels: np.ndarray, with_pairs: bool = False) -> Iterator[NodeBatch]:
        """
        Yield one epoch of class-balanced batches

        Pool normals follow a fresh permutation in chunks of
        ``batch_size - batch_size // 2``; each chunk is joined by as many pool
        anomalies drawn uniformly with replacement. A pool holding a single
        class falls back to :meth:`epoch`.

        Args:
            labels: 0/1 label per graph node (indexed by node id)
        """
        labels = np.asarray(labels)[self.pool]
        anomalies = self.pool[labels == 1]
        normals = self.pool[labels == 0]
        if anomalies.size == 0 or normals.size == 0:
            yield from self.epoch(with_pairs=with_pairs)
            return

        half = self.balanced_half
        order = normals[self.rng.permutation(normals.size)]
        for start in range(0, order.size, half):
            chunk = order[start:start + half]
            drawn = anomalies[self.rng.integers(0, anomalies.size, size=chunk.size)]
            yield self.sample_batch(np.concatenate([chunk, drawn]), with_pairs=with_pairs)

    @property
    def balanced_half(self) -> int:
        """Normals per balanced batch."""
        return max(1, self.batch_size - self.batch_size // 2)

    def sample_batch(self, centres: np.ndarray, with_pairs: bool = True) -> NodeBatch:
        """
        Build a batch around ``centres``

        Args:
            with_pairs: Draw positives and negatives; when False only the
                centres' neighbourhood is sampled

        Raises:
            DegenerateGraphError: a centre is isolated or adjacent to every
                other node
        """
        centres = np.asarray(centres, dtype=np.int64)
        if with_pairs:
            positives = self._positives(centres)
            negatives = self._negatives(centres)
        else:
            positives = np.empty(0, dtype=np.int64)
            negatives = np.empty(0, dtype=np.int64)

        nodes, inverse = np.unique(np.concatenate([centres, positives, negatives]), return_inverse=True)
        # Keep first-seen order so centres lead the encoder output.
        _, first = np.unique(inverse, return_index=True)
        rank = np.empty(first.size, dtype=np.int64)
        rank[np.argsort(first, kind="stable")] = np.arange(first.size)
        nodes = nodes[np.argsort(first, kind="stable")]
        index = rank[inverse]

        neighborhood = sample_fanout(self.graph, nodes, self.fanouts, self.rng)
        n_c, n_p = centres.size, positives.size
        return NodeBatch(
            centres=centres,
            positives=positives,
            negatives=negatives,
            nodes=nodes,
            centre_index=index[:n_c],
            positive_index=index[n_c:n_c + n_p],
            negative_index=index[n_c + n_p:],
            neighborhood=neighborhood,
        )

    def _positives(self, centres: np.ndarray) -> np.ndarray:
        degrees = self.graph.degrees[centres]
        if np.any(degrees == 0):
            bad = int(centres[np.flatnonzero(degrees == 0)[0]])
            raise DegenerateGraphError(f"node {bad} has no neighbours to use as a positive")
        offsets = np.floor(self.rng.random(centres.size) * degrees).astype(np.int64)
        return self.graph.indices[self.graph.indptr[centres] + offsets].astype(np.int64)

    def _draw(self, size: int) -> np.ndarray:
        if self._negative_cdf is None:
            return self.rng.integers(0, self.graph.num_nodes, size=size)
        draws = np.searchsorted(self._negative_cdf, self.rng.random(size), side="right")
        return np.minimum(draws, self.graph.num_nodes - 1)

    def _negatives(self, centres: np.ndarray) -> np.ndarray:
        """Rejection sampling from P_n restricted to V minus the closed neighbourhood."""
        n = self.graph.num_nodes
        closed = self.graph.degrees[centres] + 1
        if np.any(closed >= n):
            bad = int(centres[np.flatnonzero(closed >= n)[0]])
            raise DegenerateGraphError(
                f"node {bad} is adjacent to every other node; no negatives can be sampled"
            )

        owners = np.repeat(centres, self.negatives)
        negatives = self._draw(owners.size)
        pending = np.flatnonzero(
            (negatives == owners) | self.graph.are_adjacent(owners, negatives)
        )
        while pending.size:
            negatives[pending] = self._draw(pending.size)
            bad = (negatives[pending] == owners[pending]) | self.graph.are_adjacent(
                owners[pending], negatives[pending]
            )
            pending = pending[bad]
        return negatives.astype(np.int64)
