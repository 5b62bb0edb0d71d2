"""Scikit-learn style estimator facade over the training stack.

``InceptionClassifier`` exposes the model through the familiar
fit/predict/predict_proba/score surface (with ``get_params``/``set_params``
working as usual), so it drops into sklearn pipelines, grid search and
cross-validation. Inputs are raw channels-first images in the 0..255 range;
the estimator applies the sample-wise preprocessing itself.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .data import ArrayDataset, batch_iterator, split_dataset
from .errors import ConfigError
from .inception import HeadConfig, build_inception_v3, build_mini_inception
from .optim import make_optimizer
from .rng import Rng
from .train import LOGITS, TrainConfig, train
from .layers import softmax
from .validation import check_images, check_is_fitted, check_labels


class InceptionClassifier(BaseEstimator, ClassifierMixin):
    """Image classifier around the Inception-style graph and epoch loop.

    Parameters
    ----------
    variant : "mini" or "full"
        "mini" (default) is the desk-scale backbone for small images;
        "full" is the complete 299x299 architecture.
    optimizer : "sgd", "rmsprop" or "adam"
    optimizer_options : dict or None
        Extra keyword arguments for the optimizer config (momentum, rho...).
    validation_fraction : float
        Held-out share of the training data used for early stopping.
    augment : AugmentConfig or None
        Augmentation applied to the training stream.
    """

    def __init__(self, variant="mini", head=None, optimizer="sgd", lr=0.001,
                 optimizer_options=None, epochs=50, batch_size=32, patience=5,
                 validation_fraction=0.2, target_size=None, augment=None,
                 freeze=None, random_state=0):
        self.variant = variant
        self.head = head
        self.optimizer = optimizer
        self.lr = lr
        self.optimizer_options = optimizer_options
        self.epochs = epochs
        self.batch_size = batch_size
        self.patience = patience
        self.validation_fraction = validation_fraction
        self.target_size = target_size
        self.augment = augment
        self.freeze = freeze
        self.random_state = random_state

    def _build_graph(self, input_shape, num_classes):
        head = self.head or HeadConfig(num_classes=num_classes)
        if head.num_classes != num_classes:
            raise ConfigError(
                f"head expects {head.num_classes} classes but y has {num_classes}"
            )
        rng = Rng(self.random_state)
        if self.variant == "mini":
            return build_mini_inception(input_shape, head, rng)
        if self.variant == "full":
            return build_inception_v3(input_shape, head, rng)
        raise ConfigError(f"variant must be 'mini' or 'full', got {self.variant!r}")

    def fit(self, X, y):
        """Train on raw images; returns self."""
        X = check_images(X)
        y = check_labels(y, len(X))
        self.classes_, y_enc = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ConfigError("need at least 2 classes")
        shape = tuple(self.target_size and (X.shape[1], *self.target_size) or X.shape[1:])
        self.graph_ = self._build_graph(shape, len(self.classes_))

        if not 0.0 < self.validation_fraction < 1.0:
            raise ConfigError("validation_fraction must be in (0, 1)")
        plan = split_dataset(len(X), self.random_state,
                             ratios=(1.0 - self.validation_fraction, self.validation_fraction, 0.0),
                             stratified=True, labels=y_enc)
        options = dict(self.optimizer_options or {})
        options.setdefault("lr", self.lr)
        config = TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size,
            optimizer=make_optimizer(self.optimizer, **options),
            patience=self.patience, seed=self.random_state, freeze=self.freeze,
            augment=self.augment, target_size=self.target_size,
        )
        self.log_, self.checkpoint_ = train(
            self.graph_, ArrayDataset(X, y_enc), plan.train, plan.val, config
        )
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        return self

    def predict_proba(self, X):
        check_is_fitted(self)
        X = check_images(X)
        dataset = ArrayDataset(X, np.zeros(len(X), dtype=np.int64))
        probs = []
        for xb, _ in batch_iterator(dataset, np.arange(len(X)), 64, seed=0,
                                    shuffle=False, target=self.target_size):
            logits, _ = self.graph_.forward(xb, mode="inference", upto=LOGITS)
            probs.append(softmax(logits))
        return np.concatenate(probs, axis=0)

    def predict(self, X):
        check_is_fitted(self)
        return self.classes_[self.predict_proba(X).argmax(axis=1)]
