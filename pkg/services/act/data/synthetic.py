"""
Synthetic Cross-Domain Benchmark

Seeded generator of a (source, target) pair of community-structured
attributed graphs with planted structural and attribute anomalies.

Both domains draw normal node features around shared community centroids in
a latent space. The target then goes through a domain transform: a random
rotation, a per-feature affine rescale and a projection to its own
dimensionality. Every transform reduces to the identity at domain_shift = 0
with equal dimensionalities.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Tuple, Union

import networkx as nx
import numpy as np
from scipy.linalg import expm

from ..core.exceptions import ConfigError
from ..schemas.config import SyntheticPairConfig
from ..utils.seeding import int_seed, numpy_rng
from .graph import AttributedGraph, Domain
from .io import save_graph, write_json

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PlantedGraph:
    """A generated graph plus the bookkeeping needed for diagnostics."""

    graph: AttributedGraph
    communities: np.ndarray
    structural: np.ndarray
    attribute: np.ndarray


def _community_sizes(n: int, communities: int) -> list:
    base, extra = divmod(n, communities)
    return [base + (1 if c < extra else 0) for c in range(communities)]


def _anomaly_count(n: int, ratio: float, domain: str) -> int:
    count = int(round(ratio * n))
    if count < 1:
        raise ConfigError(f"{domain}: anomaly ratio {ratio} yields no anomalies for {n} nodes")
    if count >= n:
        raise ConfigError(f"{domain}: anomaly ratio {ratio} leaves no normal nodes")
    return count


def _sbm_edges(sizes: list, cfg: SyntheticPairConfig, seed: int) -> np.ndarray:
    k = len(sizes)
    probs = [[cfg.p_intra if i == j else cfg.p_inter for j in range(k)] for i in range(k)]
    sbm = nx.stochastic_block_model(sizes, probs, seed=seed, sparse=True)
    edges = np.asarray(sorted(tuple(sorted(e)) for e in sbm.edges()), dtype=np.int64)
    return edges.reshape(-1, 2)


def _connect_isolated(edges: np.ndarray, communities: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Give every isolated node one edge to a random member of its community."""
    n = communities.size
    degree = np.bincount(edges.ravel(), minlength=n) if edges.size else np.zeros(n, dtype=np.int64)
    extra = []
    for v in np.flatnonzero(degree == 0):
        mates = np.flatnonzero(communities == communities[v])
        mates = mates[mates != v]
        if mates.size == 0:
            mates = np.flatnonzero(np.arange(n) != v)
        extra.append((v, int(rng.choice(mates))))
    if not extra:
        return edges
    return np.concatenate([edges, np.asarray(extra, dtype=np.int64)])


def _domain_transform(latent: np.ndarray, cfg: SyntheticPairConfig, seed: int) -> np.ndarray:
    rng = numpy_rng(seed, "generator.domain_transform")
    dim = latent.shape[1]

    skew = rng.normal(size=(dim, dim))
    skew = (skew - skew.T) / np.sqrt(2 * dim)
    rotation = expm(cfg.domain_shift * skew)

    scale = 1.0 + cfg.domain_shift * rng.uniform(-0.5, 0.5, size=dim)
    offset = cfg.domain_shift * rng.normal(size=dim)
    shifted = (latent @ rotation) * scale + offset

    if cfg.dim_target == dim:
        return shifted
    gaussian = rng.normal(size=(max(dim, cfg.dim_target), min(dim, cfg.dim_target)))
    q, _ = np.linalg.qr(gaussian)
    projection = q if cfg.dim_target < dim else q.T
    return shifted @ projection


def _planted_domain(
    domain: Domain,
    n: int,
    ratio: float,
    centroids: np.ndarray,
    cfg: SyntheticPairConfig,
) -> tuple:
    """Edges, latent features, labels, community ids and (structural, attribute) anomaly ids."""
    seed = cfg.seed
    sizes = _community_sizes(n, cfg.communities)
    communities = np.repeat(np.arange(cfg.communities), sizes)

    edges = _sbm_edges(sizes, cfg, int_seed(seed, f"generator.{domain}.edges"))
    edges = _connect_isolated(edges, communities, numpy_rng(seed, f"generator.{domain}.isolated"))

    rng = numpy_rng(seed, f"generator.{domain}.features")
    latent = centroids[communities] + rng.normal(0.0, cfg.feature_noise, size=(n, centroids.shape[1]))

    count = _anomaly_count(n, ratio, domain)
    rng = numpy_rng(seed, f"generator.{domain}.anomalies")
    anomalies = np.sort(rng.choice(n, size=count, replace=False))
    n_structural = int(round(cfg.structural_fraction * count))
    structural = np.sort(rng.choice(anomalies, size=n_structural, replace=False))
    attribute = np.setdiff1d(anomalies, structural)

    # Structural anomalies: extra uniform edges into other communities.
    extra = []
    for v in structural:
        others = np.flatnonzero(communities != communities[v])
        if others.size == 0:
            others = np.flatnonzero(np.arange(n) != v)
        size = min(cfg.structural_extra_edges, others.size)
        extra.extend((v, int(u)) for u in rng.choice(others, size=size, replace=False))
    if extra:
        edges = np.concatenate([edges, np.asarray(extra, dtype=np.int64)])

    # Attribute anomalies: per-feature shift of attribute_shift noise std units.
    signs = rng.choice((-1.0, 1.0), size=(attribute.size, centroids.shape[1]))
    latent[attribute] += cfg.attribute_shift * cfg.feature_noise * signs

    labels = np.zeros(n, dtype=np.int64)
    labels[anomalies] = 1
    return edges, latent, labels, communities, (structural, attribute)


def generate_cd_pair(cfg: SyntheticPairConfig) -> Tuple[AttributedGraph, AttributedGraph]:
    """
    Generate a labelled source graph and a target graph with held-out labels

    Output is a pure function of ``cfg`` (including ``cfg.seed``).

    Raises:
        ConfigError: infeasible configuration (e.g. zero anomalies)
    """
    source, target = generate_planted_pair(cfg)
    return source.graph, target.graph


def generate_planted_pair(cfg: SyntheticPairConfig) -> Tuple[PlantedGraph, PlantedGraph]:
    """``generate_cd_pair`` keeping community and anomaly-type bookkeeping."""
    latent_dim = cfg.dim_source
    rng = numpy_rng(cfg.seed, "generator.centroids")
    centroids = rng.normal(0.0, cfg.centroid_scale, size=(cfg.communities, latent_dim))

    planted: Dict[str, PlantedGraph] = {}
    for domain, n, ratio in (
        ("source", cfg.n_source, cfg.anomaly_ratio_source),
        ("target", cfg.n_target, cfg.anomaly_ratio_target),
    ):
        edges, latent, labels, communities, (structural, attribute) = _planted_domain(
            domain, n, ratio, centroids, cfg
        )
        if domain == "source":
            graph = AttributedGraph.from_edges(n, edges, latent, labels, domain="source")
        else:
            features = _domain_transform(latent, cfg, cfg.seed)
            graph = AttributedGraph.from_edges(n, edges, features, labels, domain="target", heldout=True)
        planted[domain] = PlantedGraph(graph, communities, structural, attribute)
        logger.info(
            f"Generated {domain} graph: {n} nodes, {graph.num_edges} edges, "
            f"{structural.size} structural + {attribute.size} attribute anomalies"
        )

    return planted["source"], planted["target"]


def write_cd_pair(cfg: SyntheticPairConfig, out_dir: Union[str, Path]) -> Dict[str, Path]:
    """
    Generate and write ``source/`` and ``target/`` dataset directories plus
    ``manifest.json`` echoing the config.
    """
    out_dir = Path(out_dir)
    source, target = generate_planted_pair(cfg)

    paths = {}
    for name, planted in (("source", source), ("target", target)):
        save_graph(planted.graph, out_dir / name)
        paths[name] = out_dir / name

    manifest = {
        "generator": cfg.model_dump(mode="json"),
        "seed": cfg.seed,
        "domains": {
            name: {
                "nodes": planted.graph.num_nodes,
                "edges": planted.graph.num_edges,
                "features": planted.graph.num_features,
                "anomalies": int(planted.graph.evaluation_labels().sum()),
                "structural_anomalies": planted.structural.tolist(),
                "attribute_anomalies": planted.attribute.tolist(),
            }
            for name, planted in (("source", source), ("target", target))
        },
    }
    write_json(manifest, out_dir / "manifest.json")
    paths["manifest"] = out_dir / "manifest.json"
    logger.info(f"Wrote synthetic pair to {out_dir}")
    return paths
