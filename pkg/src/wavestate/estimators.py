"""scikit-learn compatible wrappers around the denoise, scalogram, MIC and CNN stages."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.feature_selection import SelectorMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import cnn
from .cwt import MotherWavelet, render_scalogram, scalogram
from .denoise import DenoiseConfig, ThresholdRule, denoise
from .features import CwtConfig, mic

__all__ = ["WaveletDenoiser", "ScalogramTransformer", "MicSelector", "CNNClassifier"]


class WaveletDenoiser(TransformerMixin, BaseEstimator):
    """Denoise each row of ``X`` (one series per sample).

    Stateless: thresholds are chosen per row from that row's own detail
    coefficients, so ``fit`` only records the input width.
    """

    def __init__(self, wavelet="db4", levels=5, shrink="soft", rule="rigrsure", per_level=True,
                 boundary_mode="symmetric"):
        self.wavelet = wavelet
        self.levels = levels
        self.shrink = shrink
        self.rule = rule
        self.per_level = per_level
        self.boundary_mode = boundary_mode

    def _config(self):
        return DenoiseConfig(self.wavelet, self.levels, self.shrink,
                             ThresholdRule(self.rule, self.per_level), self.boundary_mode)

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self._config()
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, fitted with {self.n_features_in_}")
        cfg = self._config()
        return np.stack([denoise(row, cfg) for row in X])


class ScalogramTransformer(TransformerMixin, BaseEstimator):
    """Rows of ``X`` -> single-channel scalogram images, shape (n, 1, height, width), values in [0, 1]."""

    def __init__(self, omega0=6.0, dj=0.125, s0=None, dt=1.0, height=64, width=64, coi_mode="none"):
        self.omega0 = omega0
        self.dj = dj
        self.s0 = s0
        self.dt = dt
        self.height = height
        self.width = width
        self.coi_mode = coi_mode

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.grid_ = CwtConfig(self.omega0, self.s0, self.dj, None, self.dt).grid(X.shape[1])
        self.wavelet_ = MotherWavelet("morlet", self.omega0)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "grid_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, fitted with {self.n_features_in_}")
        out = np.empty((len(X), 1, self.height, self.width))
        for i, row in enumerate(X):
            sg = scalogram(row, self.wavelet_, self.grid_, self.dt)
            out[i, 0] = render_scalogram(sg, self.height, self.width, self.coi_mode) / 255.0
        return out


class MicSelector(SelectorMixin, BaseEstimator):
    """Keep the ``k`` columns with the highest MIC against ``y``; ties go to the lower column index."""

    def __init__(self, k=3, b_exponent=0.6):
        self.k = k
        self.b_exponent = b_exponent

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        if not 1 <= self.k <= X.shape[1]:
            raise ValueError(f"k must lie in [1, {X.shape[1]}], got {self.k}")
        self.scores_ = np.array([mic(X[:, j], y, self.b_exponent).score for j in range(X.shape[1])])
        self.n_features_in_ = X.shape[1]
        return self

    def _get_support_mask(self):
        check_is_fitted(self, "scores_")
        order = np.lexsort((np.arange(len(self.scores_)), -self.scores_))
        mask = np.zeros(len(self.scores_), dtype=bool)
        mask[order[: self.k]] = True
        return mask


class CNNClassifier(ClassifierMixin, BaseEstimator):
    """Binary image classifier on (n, C, H, W) input using a reference architecture.

    The most recent ``validation_fraction`` of the training rows (by position)
    drive early stopping, so pass rows in date order.
    """

    def __init__(self, net="shallow", epochs=50, batch_size=32, learning_rate=0.01, optimizer="sgd_momentum",
                 momentum=0.9, early_stop_patience=10, validation_fraction=0.1, random_state=0):
        self.net = net
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.optimizer = optimizer
        self.momentum = momentum
        self.early_stop_patience = early_stop_patience
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    @staticmethod
    def _images(X):
        X = check_array(X, dtype=np.float64, allow_nd=True)
        if X.ndim != 4:
            raise ValueError(f"expected images of shape (n, C, H, W), got {X.shape}")
        return X

    def fit(self, X, y):
        X = self._images(X)
        y = np.asarray(y).ravel()
        if len(X) != len(y):
            raise ValueError(f"{len(X)} images but {len(y)} labels")
        self.classes_ = unique_labels(y)
        if len(self.classes_) > 2:
            raise ValueError("CNNClassifier is binary; got more than two classes")
        target = (y == self.classes_[-1]).astype(np.float64)
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in [0, 1)")
        n_val = int(round(len(X) * self.validation_fraction))
        n_fit = len(X) - n_val
        seed = int(self.random_state or 0)
        self.network_ = cnn.build_reference_net(self.net, X.shape[1:], seed)
        config = cnn.TrainConfig(self.epochs, self.batch_size, self.learning_rate, self.optimizer,
                                 self.momentum, seed, self.early_stop_patience)
        val = (X[n_fit:], target[n_fit:]) if n_val else (None, None)
        self.history_ = cnn.train(self.network_, X[:n_fit], target[:n_fit], *val, config=config)
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "network_")
        _, p = cnn.predict(self.network_, self._images(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        p = self.predict_proba(X)[:, 1]
        return self.classes_[(p > 0.5).astype(int) if len(self.classes_) == 2 else np.zeros(len(p), int)]
