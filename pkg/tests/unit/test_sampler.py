"""
Unit tests for fanout sampling and contrastive minibatch construction.
"""

import numpy as np
import pytest
from scipy import stats

from services.act.core.exceptions import DegenerateGraphError
from services.act.data.graph import AttributedGraph
from services.act.data.sampler import NeighborSampler, sample_fanout


def _sampler(graph, seed=0, **kwargs):
    options = dict(batch_size=8, negatives=3, fanouts=[None, 2])
    options.update(kwargs)
    return NeighborSampler(graph, rng=np.random.default_rng(seed), **options)


@pytest.mark.unit
class TestSampleFanout:
    def test_blocks_chain_from_input_to_output(self, small_graph):
        nodes = np.array([0, 5, 9])
        neighborhood = sample_fanout(small_graph, nodes, [None, 2], np.random.default_rng(0))

        assert len(neighborhood.blocks) == 2
        np.testing.assert_array_equal(neighborhood.output_nodes, nodes)
        for inner, outer in zip(neighborhood.blocks[:-1], neighborhood.blocks[1:]):
            np.testing.assert_array_equal(inner.dst_nodes, outer.src_nodes)

    def test_aggregator_rows_are_means_including_self(self, path_graph):
        neighborhood = sample_fanout(path_graph, np.array([2]), [None], np.random.default_rng(0))
        block = neighborhood.blocks[0]
        dense = block.aggregator.to_dense().numpy()

        np.testing.assert_allclose(dense.sum(axis=1), [1.0])
        assert set(block.src_nodes.tolist()) == {1, 2, 3}
        assert (block.num_dst, block.num_src) == (1, 3)
        np.testing.assert_allclose(dense[0], [1 / 3] * 3)

    def test_fanout_limits_neighbours(self, small_graph):
        neighborhood = sample_fanout(small_graph, np.arange(30), [1], np.random.default_rng(0))
        dense = neighborhood.blocks[0].aggregator.to_dense().numpy()
        # self plus at most one neighbour
        assert ((dense > 0).sum(axis=1) <= 2).all()

    def test_sampled_nodes_are_neighbours(self, small_graph):
        neighborhood = sample_fanout(small_graph, np.array([4]), [2], np.random.default_rng(1))
        sampled = set(neighborhood.blocks[0].src_nodes.tolist()) - {4}
        assert sampled <= set(small_graph.neighbors(4).tolist())


@pytest.mark.unit
class TestNeighborSampler:
    def test_epoch_covers_pool_once(self, small_graph):
        sampler = _sampler(small_graph)
        centres = np.concatenate([b.centres for b in sampler.epoch()])

        assert sampler.batches_per_epoch == 4
        np.testing.assert_array_equal(np.sort(centres), np.arange(30))

    def test_positives_are_neighbours(self, small_graph):
        batch = _sampler(small_graph).sample_batch(np.arange(10))
        assert small_graph.are_adjacent(batch.centres, batch.positives).all()

    def test_negatives_exclude_closed_neighbourhood(self, small_graph):
        batch = _sampler(small_graph).sample_batch(np.arange(30))
        owners = np.repeat(batch.centres, 3)

        assert batch.negatives.size == 90
        assert batch.num_negatives == 3
        assert not small_graph.are_adjacent(owners, batch.negatives).any()
        assert not (owners == batch.negatives).any()

    def test_indices_address_batch_nodes(self, small_graph):
        batch = _sampler(small_graph).sample_batch(np.array([3, 7]))

        np.testing.assert_array_equal(batch.nodes[batch.centre_index], batch.centres)
        np.testing.assert_array_equal(batch.nodes[batch.positive_index], batch.positives)
        np.testing.assert_array_equal(batch.nodes[batch.negative_index], batch.negatives)
        np.testing.assert_array_equal(batch.neighborhood.output_nodes, batch.nodes)

    def test_without_pairs(self, small_graph):
        batch = _sampler(small_graph).sample_batch(np.array([3, 7]), with_pairs=False)
        assert batch.positives.size == 0 and batch.negatives.size == 0
        np.testing.assert_array_equal(batch.nodes, [3, 7])

    def test_pool_restricts_centres(self, small_graph):
        pool = np.array([1, 4, 8, 12])
        sampler = _sampler(small_graph, pool=pool, batch_size=3)
        centres = np.concatenate([b.centres for b in sampler.epoch(with_pairs=False)])
        np.testing.assert_array_equal(np.sort(centres), pool)

    def test_degree_weighted_negatives(self, small_graph):
        batch = _sampler(small_graph, negative_distribution="degree").sample_batch(np.arange(30))
        owners = np.repeat(batch.centres, 3)
        assert not small_graph.are_adjacent(owners, batch.negatives).any()

    def test_same_seed_same_batches(self, small_graph):
        a = [b.negatives for b in _sampler(small_graph, seed=5).epoch()]
        b = [b.negatives for b in _sampler(small_graph, seed=5).epoch()]
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)

    def test_isolated_centre(self):
        graph = AttributedGraph.from_edges(3, [(0, 1)], np.zeros((3, 1)))
        with pytest.raises(DegenerateGraphError):
            _sampler(graph).sample_batch(np.array([2]))

    def test_complete_graph_has_no_negatives(self):
        edges = [(i, j) for i in range(4) for j in range(i + 1, 4)]
        graph = AttributedGraph.from_edges(4, edges, np.zeros((4, 1)))
        with pytest.raises(DegenerateGraphError):
            _sampler(graph).sample_batch(np.array([0]))

    def test_positives_uniform_over_neighbours(self, small_graph):
        centre = 0
        neighbours = small_graph.neighbors(centre)
        sampler = _sampler(small_graph, seed=11, negatives=1)

        positives = sampler.sample_batch(np.full(10_000, centre)).positives
        counts = np.array([(positives == u).sum() for u in neighbours])

        assert counts.sum() == 10_000
        assert stats.chisquare(counts).pvalue > 1e-3
        np.testing.assert_allclose(counts / 10_000, 1 / neighbours.size, atol=0.02)


@pytest.mark.unit
class TestBalancedEpoch:
    def test_half_of_every_batch_is_anomalous(self, small_graph):
        sampler = _sampler(small_graph, batch_size=8)
        anomalies = np.flatnonzero(small_graph.labels)

        batches = list(sampler.balanced_epoch(small_graph.labels))

        assert len(batches) == 7  # ceil(27 normals / 4)
        for batch in batches:
            is_anomaly = small_graph.labels[batch.centres] == 1
            assert is_anomaly.sum() == (~is_anomaly).sum()
            assert np.isin(batch.centres[is_anomaly], anomalies).all()
        normals = np.concatenate([b.centres[small_graph.labels[b.centres] == 0] for b in batches])
        np.testing.assert_array_equal(np.sort(normals), np.flatnonzero(small_graph.labels == 0))

    def test_anomalies_come_from_pool(self, small_graph):
        pool = np.setdiff1d(np.arange(30), [23])
        sampler = _sampler(small_graph, batch_size=8, pool=pool)

        centres = np.concatenate([b.centres for b in sampler.balanced_epoch(small_graph.labels)])

        assert set(centres[small_graph.labels[centres] == 1].tolist()) <= {2, 11}
        assert 23 not in centres

    def test_single_class_pool_falls_back_to_plain_epoch(self, small_graph):
        pool = np.array([0, 1, 3, 4, 5])
        sampler = _sampler(small_graph, batch_size=2, pool=pool)

        centres = np.concatenate([b.centres for b in sampler.balanced_epoch(small_graph.labels)])

        np.testing.assert_array_equal(np.sort(centres), pool)

    def test_duplicate_centres_share_one_row(self, small_graph):
        batch = _sampler(small_graph).sample_batch(np.array([2, 5, 2, 2]), with_pairs=False)

        np.testing.assert_array_equal(batch.nodes, [2, 5])
        np.testing.assert_array_equal(batch.centre_index, [0, 1, 0, 0])
