"""scikit-learn compatible wrapper around the functional model and training loop."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .model import ModelConfig, check_params, init_params, predict
from .train import TrainConfig, fit, load_checkpoint, save_checkpoint


def _check_windows(X, n_features: int | None = None) -> np.ndarray:
    X = check_array(X, dtype=np.float64, allow_nd=True, ensure_2d=False)
    if X.ndim != 3:
        raise ValueError(f"expected windows shaped (n_samples, lookback, features), got {X.shape}")
    if n_features is not None and X.shape[2] != n_features:
        raise ValueError(f"expected {n_features} features per step, got {X.shape[2]}")
    return X


class TransformerRegressor(RegressorMixin, BaseEstimator):
    """time2vec + transformer encoder regressor on ``(n, lookback, features)`` windows.

    Hyperparameters mirror :class:`ModelConfig` and :class:`TrainConfig`;
    ``random_state`` seeds both initialization and batch shuffling.

    After ``fit``: ``params_`` (name -> Tensor), ``history_`` (list of
    :class:`EpochLog`), ``model_config_`` and ``train_config_``.
    """

    def __init__(self, t2v_k=2, d_model=32, heads=2, blocks=2, ffn_width=64, head_width=32,
                 dropout=0.0, epochs=50, batch_size=32, learning_rate=1e-3, adam_beta1=0.9,
                 adam_beta2=0.999, adam_epsilon=1e-8, shuffle=True, random_state=0):
        self.t2v_k = t2v_k
        self.d_model = d_model
        self.heads = heads
        self.blocks = blocks
        self.ffn_width = ffn_width
        self.head_width = head_width
        self.dropout = dropout
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.adam_beta1 = adam_beta1
        self.adam_beta2 = adam_beta2
        self.adam_epsilon = adam_epsilon
        self.shuffle = shuffle
        self.random_state = random_state

    def _configs(self, lookback: int, n_features: int) -> tuple[ModelConfig, TrainConfig]:
        seed = 0 if self.random_state is None else int(self.random_state)
        mc = ModelConfig(lookback=lookback, input_features=n_features, t2v_k=self.t2v_k,
                         d_model=self.d_model, heads=self.heads, blocks=self.blocks,
                         ffn_width=self.ffn_width, head_width=self.head_width,
                         dropout=self.dropout, seed=seed)
        tc = TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                         learning_rate=self.learning_rate, adam_beta1=self.adam_beta1,
                         adam_beta2=self.adam_beta2, adam_epsilon=self.adam_epsilon,
                         seed=seed, shuffle=self.shuffle)
        return mc, tc

    def fit(self, X, y, validation_data=None, callback=None):
        X, y = check_X_y(X, y, dtype=np.float64, allow_nd=True, y_numeric=True)
        X = _check_windows(X)
        mc, tc = self._configs(X.shape[1], X.shape[2])
        X_val = y_val = None
        if validation_data is not None:
            X_val = _check_windows(validation_data[0], X.shape[2])
            y_val = np.asarray(validation_data[1], dtype=np.float64)
        self.params_, self.history_ = fit(X, y, X_val, y_val, mc, tc, init_params(mc), callback)
        self.model_config_, self.train_config_ = mc, tc
        self.n_features_in_ = X.shape[2]
        return self

    def predict(self, X, batch_size: int = 256):
        check_is_fitted(self, "params_")
        X = _check_windows(X, self.n_features_in_)
        return predict(X, self.params_, self.model_config_, batch_size)

    def save(self, path) -> None:
        check_is_fitted(self, "params_")
        save_checkpoint(self.params_, path)

    def load(self, path, lookback: int = 8, n_features: int = 5):
        """Restore parameters from a checkpoint written with the same hyperparameters."""
        params = load_checkpoint(path)
        mc, tc = self._configs(lookback, n_features)
        check_params(params, mc)
        self.params_, self.history_ = params, []
        self.model_config_, self.train_config_ = mc, tc
        self.n_features_in_ = n_features
        return self
