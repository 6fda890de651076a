"""
Isolation Forest Module

Isolation Forest used as the off-the-shelf detector for self-labelling.

Tree construction and scoring are scikit-learn's ``IsolationForest``
(uniform feature, uniform split value inside the node's range, height limit
ceil(log2(subsample)), subsamples drawn without replacement). The anomaly
score is the negated ``score_samples``::

    s(x) = 2 ** (-E[h(x)] / c(psi))

where h(x) is the leaf depth plus c(leaf size), c the average unsuccessful
BST search length and psi the subsample size. Higher scores are more
anomalous.
"""

import logging
from typing import Optional

import numpy as np
from sklearn.ensemble import IsolationForest

from ..core.exceptions import StructuralError
from ..schemas.config import ForestConfig

logger = logging.getLogger(__name__)


class IsolationForestDetector:
    """
    Isolation Forest anomaly detector

    Attributes:
        config: Tree count, subsample size, seed
        model_: Fitted scikit-learn forest (set after fit)
        subsample_: Effective subsample size min(subsample, rows)

    Example:
        >>> detector = IsolationForestDetector(ForestConfig(seed=0)).fit(X)
        >>> scores = detector.score(X)
    """

    def __init__(self, config: Optional[ForestConfig] = None, seed: Optional[int] = None):
        self.config = config or ForestConfig()
        self.seed = seed if seed is not None else (self.config.seed or 0)
        self.model_: Optional[IsolationForest] = None
        self.subsample_: Optional[int] = None
        self.n_features_: Optional[int] = None

    def fit(self, X: np.ndarray) -> "IsolationForestDetector":
        """
        Build ``n_trees`` isolation trees

        Args:
            X: n x d data, n >= 2; never labels

        Returns:
            self, for method chaining
        """
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise StructuralError(f"Expected 2D array, got shape {X.shape}")
        if X.shape[0] < 2:
            raise StructuralError(f"Need at least 2 rows to fit, got {X.shape[0]}")

        self.subsample_ = min(self.config.subsample, X.shape[0])
        self.n_features_ = X.shape[1]
        self.model_ = IsolationForest(
            n_estimators=self.config.n_trees,
            max_samples=self.subsample_,
            max_features=1.0,
            bootstrap=False,
            random_state=self.seed,
            n_jobs=self.config.n_jobs,
        )
        self.model_.fit(X)

        logger.info(
            f"Fitted IsolationForest: {self.config.n_trees} trees, "
            f"subsample={self.subsample_}, n_train={X.shape[0]}"
        )
        return self

    def score(self, X: np.ndarray) -> np.ndarray:
        """
        Anomaly scores in (0, 1]

        Returns:
            np.ndarray: s(x) = 2^(-E[h(x)] / c(subsample)); higher = more anomalous
        """
        if self.model_ is None:
            raise RuntimeError("Detector has not been fitted. Call fit() first.")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features_:
            raise StructuralError(
                f"Expected data with {self.n_features_} columns, got shape {X.shape}"
            )
        return -self.model_.score_samples(X)


def isolation_scores(X: np.ndarray, config: ForestConfig, seed: int) -> np.ndarray:
    """Fit on ``X`` and score the same rows."""
    return IsolationForestDetector(config, seed=seed).fit(X).score(X)
