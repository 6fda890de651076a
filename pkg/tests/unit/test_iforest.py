"""
Unit tests for the Isolation Forest detector.
"""

import numpy as np
import pytest

from services.act.core.exceptions import StructuralError
from services.act.detectors.iforest import IsolationForestDetector, isolation_scores
from services.act.schemas.config import ForestConfig


@pytest.mark.unit
@pytest.mark.ml
class TestIsolationForest:
    def test_outlier_scores_highest(self):
        rng = np.random.default_rng(0)
        X = np.vstack([rng.normal(size=(200, 2)), [[8.0, 8.0]]])

        scores = isolation_scores(X, ForestConfig(n_trees=100, subsample=128), seed=0)

        assert scores.argmax() == 200
        assert scores.max() > 0.6
        assert ((scores > 0) & (scores < 1)).all()

    def test_deterministic_for_seed(self):
        X = np.random.default_rng(1).normal(size=(100, 3))
        cfg = ForestConfig(n_trees=25, subsample=64)
        np.testing.assert_array_equal(isolation_scores(X, cfg, seed=4), isolation_scores(X, cfg, seed=4))

    def test_subsample_capped_at_rows(self):
        X = np.random.default_rng(2).normal(size=(30, 2))
        detector = IsolationForestDetector(ForestConfig(n_trees=10, subsample=256), seed=0).fit(X)
        assert detector.subsample_ == 30

    def test_identical_rows_score_half(self):
        """Identical rows cannot be split: E[h] = c(psi), so s = 2^-1."""
        X = np.ones((20, 3))
        scores = isolation_scores(X, ForestConfig(n_trees=10, subsample=16), seed=0)
        np.testing.assert_allclose(scores, 0.5)

    def test_score_variance_shrinks_with_more_trees(self):
        X = np.random.default_rng(3).normal(size=(80, 3))

        def spread(n_trees):
            runs = np.stack([isolation_scores(X, ForestConfig(n_trees=n_trees, subsample=64), seed=s) for s in range(12)])
            return runs.var(axis=0).mean()

        few, many = spread(4), spread(128)

        assert many < 0.25 * few

    def test_score_before_fit(self):
        with pytest.raises(RuntimeError):
            IsolationForestDetector().score(np.zeros((3, 2)))

    def test_column_mismatch(self):
        detector = IsolationForestDetector(ForestConfig(n_trees=5, subsample=8), seed=0).fit(np.zeros((10, 2)) + np.arange(10)[:, None])
        with pytest.raises(StructuralError):
            detector.score(np.zeros((3, 3)))

    def test_too_few_rows(self):
        with pytest.raises(StructuralError):
            IsolationForestDetector().fit(np.zeros((1, 2)))
