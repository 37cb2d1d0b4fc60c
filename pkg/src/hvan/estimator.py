"""scikit-learn style wrapper around model building and training."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .data import CasePair
from .network import ModelConfig
from .training import Checkpoint, TrainConfig, predict_logits, train

__all__ = ["HVANClassifier"]


def _check_volumes(X):
    X = check_array(X, allow_nd=True, dtype=np.float32)
    if X.ndim != 5 or X.shape[1] != 2:
        raise ValueError(f"X must have shape (n, 2, H, W, D) with views (transverse, sagittal), got {X.shape}")
    return X


def _cases(X, y=None):
    labels = np.zeros(len(X), dtype=int) if y is None else y
    return [CasePair(str(i), X[i, 0], X[i, 1], int(labels[i])) for i in range(len(X))]


class HVANClassifier(ClassifierMixin, BaseEstimator):
    """Binary classifier on paired transverse/sagittal volumes.

    ``X`` has shape (n, 2, H, W, D): index 0 along axis 1 is the transverse
    volume, index 1 the sagittal one. Single-view settings ignore the unused
    half. Volumes are used as given (normalize them beforehand).
    """

    def __init__(
        self,
        stage_channels=(32, 64, 128, 256),
        use_transverse=True,
        use_sagittal=True,
        use_iva=True,
        use_cva=True,
        use_hvaf=True,
        reduction=16,
        num_heads=1,
        lr=1e-4,
        epochs=100,
        batch_size=4,
        focal_gamma=2.0,
        focal_alpha=None,
        threshold=0.5,
        random_state=0,
    ):
        self.stage_channels = stage_channels
        self.use_transverse = use_transverse
        self.use_sagittal = use_sagittal
        self.use_iva = use_iva
        self.use_cva = use_cva
        self.use_hvaf = use_hvaf
        self.reduction = reduction
        self.num_heads = num_heads
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.focal_gamma = focal_gamma
        self.focal_alpha = focal_alpha
        self.threshold = threshold
        self.random_state = random_state

    def _configs(self, input_size):
        seed = 0 if self.random_state is None else int(self.random_state)
        model_cfg = ModelConfig(
            input_size=tuple(int(s) for s in input_size),
            stage_channels=tuple(self.stage_channels),
            use_transverse=self.use_transverse,
            use_sagittal=self.use_sagittal,
            use_iva=self.use_iva,
            use_cva=self.use_cva,
            use_hvaf=self.use_hvaf,
            reduction=self.reduction,
            num_heads=self.num_heads,
            seed=seed,
        ).validate()
        train_cfg = TrainConfig(
            lr=self.lr,
            epochs=self.epochs,
            batch_size=self.batch_size,
            focal_gamma=self.focal_gamma,
            focal_alpha=self.focal_alpha,
            threshold=self.threshold,
            seed=seed,
        ).validate()
        return model_cfg, train_cfg

    def fit(self, X, y):
        X, y = check_X_y(X, y, allow_nd=True, dtype=np.float32)
        X = _check_volumes(X)
        self.classes_ = unique_labels(y)
        if len(self.classes_) != 2:
            raise ValueError(f"need exactly two classes, got {list(self.classes_)}")
        y01 = (y == self.classes_[1]).astype(int)
        model_cfg, train_cfg = self._configs(X.shape[2:])
        self.checkpoint_: Checkpoint = train(model_cfg, train_cfg, _cases(X, y01))
        self.model_ = self.checkpoint_.model()
        self.history_ = self.checkpoint_.history
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        return self

    def decision_function(self, X):
        """Logit of the second class in ``classes_``."""
        check_is_fitted(self, "model_")
        X = _check_volumes(X)
        if tuple(X.shape[2:]) != self.model_.config.input_size:
            raise ValueError(f"volumes must be {self.model_.config.input_size}, got {X.shape[2:]}")
        return predict_logits(self.model_, _cases(X))

    def predict_proba(self, X):
        p = 1.0 / (1.0 + np.exp(-self.decision_function(X)))
        return np.stack([1 - p, p], axis=1)

    def predict(self, X):
        p = self.predict_proba(X)[:, 1]
        return self.classes_[(p >= self.threshold).astype(int)]
