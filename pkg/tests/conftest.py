"""
Pytest Configuration and Fixtures

Provides shared fixtures for all test modules.

Industry Standards:
    - Fixture-based test setup
    - Small deterministic graphs for unit tests
    - Reduced training budgets for integration tests
    - Temporary output directories cleaned up by pytest
"""

import os
import sys

import numpy as np
import pytest
import torch

# Add project root to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from services.act.data.graph import AttributedGraph  # noqa: E402
from services.act.data.synthetic import generate_cd_pair  # noqa: E402
from services.act.schemas.config import (  # noqa: E402
    DataConfig,
    ForestConfig,
    RunConfig,
    SamplerConfig,
    SinkhornConfig,
    SyntheticPairConfig,
    TrainConfig,
)


@pytest.fixture(scope="session", autouse=True)
def single_thread_torch():
    """Pin torch to one intra-op thread so float64 reductions are reproducible."""
    torch.set_num_threads(1)
    yield


def _ring_with_chords(n: int, d: int, seed: int, domain: str = "source") -> AttributedGraph:
    rng = np.random.default_rng(seed)
    edges = [(i, (i + 1) % n) for i in range(n)] + [(i, (i + 7) % n) for i in range(0, n, 3)]
    labels = np.zeros(n, dtype=np.int64)
    labels[[2, 11, 23]] = 1
    return AttributedGraph.from_edges(n, edges, rng.normal(size=(n, d)), labels, domain=domain)


@pytest.fixture(scope="function")
def path_graph():
    """
    Path Graph Fixture

    Returns:
        AttributedGraph: 0-1-2-3-4 with 3 features and node 4 labelled anomalous
    """
    features = np.arange(15, dtype=np.float64).reshape(5, 3)
    labels = np.array([0, 0, 0, 0, 1])
    return AttributedGraph.from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4)], features, labels)


@pytest.fixture(scope="function")
def small_graph():
    """
    Small Graph Fixture

    Returns:
        AttributedGraph: 30-node ring with chords, 4 features, 3 anomalies
    """
    return _ring_with_chords(30, 4, seed=7)


@pytest.fixture(scope="function")
def small_target_graph():
    """30-node target graph with 5 features and held-out labels."""
    graph = _ring_with_chords(30, 5, seed=8, domain="target")
    return AttributedGraph(graph.adjacency, graph.features, None, "target", graph.labels)


@pytest.fixture(scope="function")
def synthetic_config():
    """
    Synthetic Pair Config Fixture

    Returns:
        SyntheticPairConfig: 120-node domains, 6 anomalies each
    """
    return SyntheticPairConfig(
        n_source=120,
        n_target=120,
        dim_source=8,
        dim_target=6,
        communities=3,
        p_intra=0.15,
        p_inter=0.01,
        structural_extra_edges=5,
        seed=0,
    )


@pytest.fixture(scope="function")
def cd_pair(synthetic_config):
    """Generated (source, target) graphs for ``synthetic_config``."""
    return generate_cd_pair(synthetic_config)


@pytest.fixture(scope="function")
def train_config():
    """
    Reduced Train Config Fixture

    Two-layer encoders, two epochs per stage and a small forest keep a
    full pipeline pass within a few seconds.
    """
    return TrainConfig(
        source_epochs=2,
        align_epochs=2,
        refit_epochs=2,
        depth=2,
        sampler=SamplerConfig(batch_size=32, negatives=3, fanouts=[5]),
        sinkhorn=SinkhornConfig(max_iterations=50),
        forest=ForestConfig(n_trees=20, subsample=64),
        source_hidden=16,
        target_hidden=8,
        embedding_dim=8,
        monitor_size=32,
        alpha=1.5,
        seed=0,
    )


@pytest.fixture(scope="function")
def run_config(tmp_path, synthetic_config, train_config):
    """
    Run Config Fixture

    Returns:
        RunConfig: generator data, reduced training, two seeds, output under tmp_path
    """
    return RunConfig(
        data=DataConfig(generator=synthetic_config, max_degree=32),
        train=train_config,
        output_dir=tmp_path / "runs",
        seeds=[0, 1],
    )


@pytest.fixture(scope="function")
def config_file(tmp_path, run_config):
    """``run_config`` written as JSON."""
    path = tmp_path / "act.json"
    path.write_text(run_config.model_dump_json(indent=2))
    return path
