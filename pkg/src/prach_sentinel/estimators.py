"""
scikit-learn compatible wrappers.

``PrachFeatureExtractor`` turns raw received buffers into classifier
tensors, ``InterferenceCNNClassifier`` wraps the residual CNN and
``CorrelationInterferenceDetector`` is the conventional-receiver baseline,
so all three compose with ``Pipeline``, ``clone`` and model selection.

Raw observations are complex arrays of shape ``(n_samples, n_rx, burst_len)``.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .cnn import PrachCNN, TrainConfig, decide, train
from .receiver import DEFAULT_THRESHOLD_FACTOR, correlate, front_end
from .metrics import baseline_label
from .scenario import FEATURE_SHAPE, extract_features
from .waveform import PrachNumerology
from .zc import DEFAULT_N_CS, zc_root

__all__ = ["PrachFeatureExtractor", "InterferenceCNNClassifier", "CorrelationInterferenceDetector"]


def _check_observations(X):
    X = np.asarray(X)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or not np.iscomplexobj(X):
        raise ValueError(f"expected complex observations (n_samples, n_rx, burst_len), got {X.dtype} {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("observations contain non-finite values")
    return X


class PrachFeatureExtractor(TransformerMixin, BaseEstimator):
    """Stateless front end + feature layout; ``fit`` only records the input width."""

    def __init__(self, seq_idx=22, feature_domain="power", n_zc=839, fft_size=1024,
                 cp_len=132, gp_len=124, subcarrier_offset=12):
        self.seq_idx = seq_idx
        self.feature_domain = feature_domain
        self.n_zc = n_zc
        self.fft_size = fft_size
        self.cp_len = cp_len
        self.gp_len = gp_len
        self.subcarrier_offset = subcarrier_offset

    def _numerology(self):
        return PrachNumerology(self.n_zc, self.fft_size, self.cp_len, self.gp_len,
                               self.subcarrier_offset).validate()

    def fit(self, X, y=None):
        X = _check_observations(X)
        self._numerology()
        self.n_rx_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_rx_")
        X = _check_observations(X)
        if X.shape[1] != self.n_rx_:
            raise ValueError(f"fitted on {self.n_rx_} antennas, got {X.shape[1]}")
        num = self._numerology()
        root = zc_root(self.seq_idx, self.n_zc)
        return np.stack([
            extract_features(front_end(x, num).bins, self.feature_domain, root) for x in X
        ]).astype(np.float32)


class InterferenceCNNClassifier(ClassifierMixin, BaseEstimator):
    """
    Residual CNN interference detector.

    ``predict_proba`` rescales the two independent sigmoid scores to sum to
    one so downstream sklearn tools see a distribution; the raw scores come
    from :meth:`sigmoid_scores`. Both give the same argmax.
    """

    def __init__(self, epochs=30, batch_size=32, learning_rate=1e-3, optimizer="adam",
                 filters=20, random_state=0):
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.optimizer = optimizer
        self.filters = filters
        self.random_state = random_state

    def fit(self, X, y, validation_data=None):
        X, y = check_X_y(X, y, allow_nd=True, dtype=np.float32)
        if X.ndim != 4:
            raise ValueError(f"expected (n_samples, H, W, C) features, got {X.shape}")
        self.classes_ = np.array([0, 1])
        if not np.all(np.isin(y, self.classes_)):
            raise ValueError("labels must be 0 (clean) or 1 (interfered)")
        y = y.astype(int)
        seed = 0 if self.random_state is None else int(self.random_state)
        self.model_ = PrachCNN(X.shape[1:], filters=self.filters, seed=seed)
        cfg = TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                          learning_rate=self.learning_rate, optimizer=self.optimizer, seed=seed)
        val = (X, y) if validation_data is None else validation_data
        self.history_ = train(self.model_, (X, y), val, cfg)
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        return self

    def sigmoid_scores(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, allow_nd=True, dtype=np.float32)
        return self.model_.predict_proba(X)

    def predict_proba(self, X):
        s = self.sigmoid_scores(X).astype(np.float64)
        total = s.sum(axis=1, keepdims=True)
        return np.where(total > 0, s / np.where(total > 0, total, 1.0), 0.5)

    def predict(self, X):
        return decide(self.sigmoid_scores(X))


class CorrelationInterferenceDetector(ClassifierMixin, BaseEstimator):
    """Second-peak rule on the correlation receiver's PDP; nothing to learn."""

    def __init__(self, seq_idx=22, n_cs=DEFAULT_N_CS, threshold_factor=DEFAULT_THRESHOLD_FACTOR,
                 n_zc=839, fft_size=1024, cp_len=132, gp_len=124, subcarrier_offset=12):
        self.seq_idx = seq_idx
        self.n_cs = n_cs
        self.threshold_factor = threshold_factor
        self.n_zc = n_zc
        self.fft_size = fft_size
        self.cp_len = cp_len
        self.gp_len = gp_len
        self.subcarrier_offset = subcarrier_offset

    def fit(self, X, y=None):
        _check_observations(X)
        self.classes_ = np.array([0, 1])
        return self

    def predict(self, X):
        check_is_fitted(self, "classes_")
        X = _check_observations(X)
        num = PrachNumerology(self.n_zc, self.fft_size, self.cp_len, self.gp_len,
                              self.subcarrier_offset).validate()
        root = zc_root(self.seq_idx, self.n_zc)
        return np.array([
            baseline_label(correlate(front_end(x, num), root), self.n_cs, self.threshold_factor)
            for x in X
        ])
