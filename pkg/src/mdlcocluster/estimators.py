"""scikit-learn style estimators wrapping the optimizer."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .corpus import EventCorpus
from .criterion import SPATIAL, TEMPORAL, block_stats, model_cost, problem_for
from .hierarchy import coarsen, cut, informativity_rate
from .optimizer import OptimizerConfig, fit_spatial, fit_temporal
from .synth import from_matrix


def check_count_matrix(X):
    """Validate a non-negative integer count matrix (dense or sparse)."""
    X = check_array(X, accept_sparse=("csr", "csc", "coo"), dtype=None, ensure_min_samples=1,
                    ensure_min_features=1)
    data = X.data if sp.issparse(X) else X
    if not np.issubdtype(data.dtype, np.integer):
        if not np.all(np.mod(data, 1) == 0):
            raise ValueError("count matrix must hold integer counts")
    if (data < 0).any():
        raise ValueError("count matrix must be non-negative")
    if data.sum() < 1:
        raise ValueError("empty corpus")
    return X


class _BaseCoclustering(BaseEstimator):
    _kind = ""

    def __init__(self, seed=0, restarts=4, max_preclusters=None, post_opt_passes=2, cost_tolerance=1e-9,
                 threads=1):
        self.seed = seed
        self.restarts = restarts
        self.max_preclusters = max_preclusters
        self.post_opt_passes = post_opt_passes
        self.cost_tolerance = cost_tolerance
        self.threads = threads

    def _config(self):
        return OptimizerConfig(seed=self.seed, restarts=self.restarts, max_preclusters=self.max_preclusters,
                               post_opt_passes=self.post_opt_passes, cost_tolerance=self.cost_tolerance,
                               threads=self.threads)

    def _corpus(self, X, timestamps=None):
        if isinstance(X, EventCorpus):
            return X
        X = check_count_matrix(X)
        dense = X.toarray() if sp.issparse(X) else np.asarray(X)
        if self._kind == TEMPORAL:
            days = np.arange(dense.shape[1]) if timestamps is None else timestamps
            return from_matrix(dense.astype(np.int64), timestamps=days)
        return from_matrix(dense.astype(np.int64))

    def fit(self, X, y=None, timestamps=None):
        """Fit on an EventCorpus or a sources x columns count matrix."""
        corpus = self._corpus(X, timestamps)
        fitter = fit_spatial if self._kind == SPATIAL else fit_temporal
        result = fitter(corpus, self._config())
        self.corpus_ = corpus
        self.result_ = result
        self.model_ = result.model
        self.row_labels_ = result.model.source_clusters.copy()
        self.column_labels_ = result.model.column_clusters.copy()
        self.n_row_clusters_ = result.model.k_sources
        self.n_column_clusters_ = result.model.k_columns
        self.cost_ = result.cost
        self.null_cost_ = result.null_cost
        return self

    def fit_predict(self, X, y=None, timestamps=None):
        return self.fit(X, timestamps=timestamps).row_labels_

    def transform(self, X=None):
        """Block count matrix (source clusters x column clusters) of the fitted partition."""
        check_is_fitted(self, "model_")
        corpus = self.corpus_ if X is None else self._corpus(X)
        return block_stats(self.model_, problem_for(corpus, self._kind)).blocks

    def score(self, X=None, y=None):
        """Negative description length of the fitted partition on ``X`` (default: training data)."""
        check_is_fitted(self, "model_")
        if X is None:
            return -self.cost_
        return -model_cost(self.model_, self._corpus(X))

    def informativity_rate(self, cost):
        check_is_fitted(self, "model_")
        return informativity_rate(cost, self.null_cost_, self.cost_)

    def dendrogram(self):
        check_is_fitted(self, "model_")
        return coarsen(self.result_, self.corpus_)

    def coarsened(self, **target):
        """Model cut from the merge dendrogram (``tau=``, ``clusters=``, ``sources=``, ``columns=``)."""
        return cut(self.dendrogram(), **target)


class SpatialCoclustering(_BaseCoclustering):
    """Joint clustering of sources and destinations by their traffic."""

    _kind = SPATIAL


class TemporalCoclustering(_BaseCoclustering):
    """Source clustering jointly with a contiguous segmentation of time.

    Columns of a count matrix passed to ``fit`` must be in time order.
    """

    _kind = TEMPORAL
