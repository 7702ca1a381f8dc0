"""scikit-learn style wrappers around :class:`~tfcnet.model.TfcModel`."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .model import ModelSpec, TfcModel, builtin_spec
from .training import TrainConfig, evaluate, predict, train
from .validation import check_frame_targets, check_labels, check_range, check_windows


class _TfcEstimator(BaseEstimator):
    def __init__(self, model="tfc-d2", feature_scale=1.0, epochs=50, batch_size=18, lr=5e-4,
                 beta1=0.9, beta2=0.999, eps=1e-8, precision=32, random_state=0):
        self.model = model
        self.feature_scale = feature_scale
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.precision = precision
        self.random_state = random_state

    def _spec(self) -> ModelSpec:
        if isinstance(self.model, ModelSpec):
            spec = self.model
        elif isinstance(self.model, dict):
            spec = ModelSpec.from_dict(self.model)
        else:
            spec = builtin_spec(self.model)
        return spec.scaled(self.feature_scale)

    def _train_config(self, horizon=1) -> TrainConfig:
        seed = 0 if self.random_state is None else int(self.random_state)
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size, lr=self.lr, beta1=self.beta1,
                           beta2=self.beta2, eps=self.eps, seed=seed, horizon=horizon)

    def _new_network(self, spec) -> TfcModel:
        seed = 0 if self.random_state is None else int(self.random_state)
        return TfcModel(spec, seed=seed, precision=self.precision)


class TFCForecaster(RegressorMixin, _TfcEstimator):
    """Next-frame forecaster.

    ``X``: windows ``(n, T, spatial..., m)`` in [-1, 1]; ``Y``: the following
    frame(s), ``(n, spatial..., m)`` or ``(n, K, spatial..., m)``. With
    ``horizon > 1`` training unrolls that many shared-weight steps.
    """

    def __init__(self, model="tfc-d2", feature_scale=1.0, epochs=50, batch_size=18, lr=5e-4,
                 beta1=0.9, beta2=0.999, eps=1e-8, precision=32, random_state=0, horizon=1):
        super().__init__(model, feature_scale, epochs, batch_size, lr, beta1, beta2, eps, precision,
                         random_state)
        self.horizon = horizon

    def fit(self, X, Y, validation_data=None):
        spec = self._spec()
        if spec.classifier:
            raise ValueError(f"{spec.name} is a classifier; use TFCClassifier")
        X = check_windows(X, spec.window, spec.frame_shape())
        check_range(X)
        Y = check_frame_targets(Y, len(X), spec.frame_shape())
        self.network_ = self._new_network(spec)
        val = None
        if validation_data is not None:
            Xv = check_windows(validation_data[0], spec.window, spec.frame_shape())
            val = (Xv, check_frame_targets(validation_data[1], len(Xv), spec.frame_shape()))
        self.report_ = train(self.network_, X, Y, self._train_config(self.horizon), validation=val)
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        return self

    def predict(self, X, steps: int = 1):
        """Forecast ``steps`` frames by serial chaining; a single frame when ``steps == 1``."""
        check_is_fitted(self, "network_")
        spec = self.network_.spec
        X = check_windows(X, spec.window, spec.frame_shape())
        out = predict(self.network_, X, steps=steps, batch_size=self.batch_size)
        return out[:, 0] if steps == 1 else out

    def score(self, X, Y, sample_weight=None):
        """Negative one-step mean squared error (higher is better)."""
        check_is_fitted(self, "network_")
        spec = self.network_.spec
        X = check_windows(X, spec.window, spec.frame_shape())
        Y = check_frame_targets(Y, len(X), spec.frame_shape())
        return -evaluate(self.network_, X, Y[:, :1], steps=1, batch_size=self.batch_size)["mse"]


class TFCClassifier(ClassifierMixin, _TfcEstimator):
    """Image classifier: image rows play the role of time, columns are the spatial axis."""

    def __init__(self, model="tfc-d1-cifar", feature_scale=1.0, epochs=10, batch_size=50, lr=5e-4,
                 beta1=0.9, beta2=0.999, eps=1e-8, precision=32, random_state=0):
        super().__init__(model, feature_scale, epochs, batch_size, lr, beta1, beta2, eps, precision,
                         random_state)

    def fit(self, X, y, validation_data=None):
        spec = self._spec()
        if not spec.classifier:
            raise ValueError(f"{spec.name} is a forecaster; use TFCForecaster")
        X = check_windows(X, spec.window, spec.frame_shape())
        n_classes = spec.head[-1]
        y = check_labels(y, len(X), n_classes)
        self.classes_ = np.arange(n_classes)
        self.network_ = self._new_network(spec)
        val = None
        if validation_data is not None:
            Xv = check_windows(validation_data[0], spec.window, spec.frame_shape())
            val = (Xv, check_labels(validation_data[1], len(Xv), n_classes))
        self.report_ = train(self.network_, X, y, self._train_config(), validation=val)
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "network_")
        spec = self.network_.spec
        X = check_windows(X, spec.window, spec.frame_shape())
        return predict(self.network_, X, batch_size=self.batch_size)

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]
