"""scikit-learn style wrapper around the sparse degradation network."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .errors import ConfigurationError
from .network import TOLERANCES, TrainConfig, evaluate_accuracy, predict_raw, train_cold, train_warm
from .oracle import Dataset, Normalization, SamplingPlan

_N_FEATURES = 5


class SparseDegradationRegressor(RegressorMixin, BaseEstimator):
    """Predict per-cycle SOH loss from (soc_start, dod, temp_c, c_rate, soh).

    ``start="warm"`` trains a dense net for ``dense_epochs`` and then prunes
    and fine-tunes it for ``sparse_epochs``; ``start="cold"`` trains the
    sparse net from random weights for ``cold_epochs``.  ``feature_box``
    fixes the normalization ranges (defaults to the standard sampling box),
    which must cover every feature the fitted net will later see.
    """

    def __init__(self, sparsity=0.5, start="warm", dense_epochs=300, sparse_epochs=250, cold_epochs=300,
                 batch_size=32, learning_rate=TrainConfig.learning_rate, lr_decay=TrainConfig.lr_decay,
                 random_state=1, feature_box=None):
        self.sparsity = sparsity
        self.start = start
        self.dense_epochs = dense_epochs
        self.sparse_epochs = sparse_epochs
        self.cold_epochs = cold_epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.lr_decay = lr_decay
        self.random_state = random_state
        self.feature_box = feature_box

    def _config(self, epochs, sparsity):
        return TrainConfig(epochs=int(epochs), batch_size=int(self.batch_size), learning_rate=float(self.learning_rate),
                           lr_decay=float(self.lr_decay), seed=int(self.random_state), sparsity=float(sparsity))

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        if X.shape[1] != _N_FEATURES:
            raise ValueError(f"expected {_N_FEATURES} features, got {X.shape[1]}")
        if self.start not in ("warm", "cold"):
            raise ConfigurationError(f"start must be 'warm' or 'cold', got {self.start!r}")
        box = np.asarray(self.feature_box if self.feature_box is not None else SamplingPlan().box(), dtype=float)
        scale = float(np.std(y)) or 1.0
        norm = Normalization(box[:, 0], box[:, 1], scale)
        norm.check_range(X)
        data = Dataset(X, y, norm, np.arange(len(y)), np.array([], dtype=int), int(self.random_state))
        if self.start == "warm":
            self.dense_net_ = train_cold(data, self._config(self.dense_epochs, 0.0))
            self.net_ = train_warm(self.dense_net_, data, self._config(self.sparse_epochs, self.sparsity))
        else:
            self.dense_net_ = None
            self.net_ = train_cold(data, self._config(self.cold_epochs, self.sparsity))
        self.n_features_in_ = _N_FEATURES
        return self

    def predict(self, X):
        check_is_fitted(self, "net_")
        X = check_array(X, dtype=float)
        if X.shape[1] != _N_FEATURES:
            raise ValueError(f"expected {_N_FEATURES} features, got {X.shape[1]}")
        return predict_raw(self.net_, X)

    def accuracy(self, X, y, tolerances=TOLERANCES):
        """Fraction of samples within each relative tolerance (see ``evaluate_accuracy``)."""
        check_is_fitted(self, "net_")
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        return evaluate_accuracy(self.net_, X, y, tolerances)
