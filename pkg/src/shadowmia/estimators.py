"""scikit-learn estimator wrappers around the MLP and the attack SVM.

These let the victim/shadow model and the attack classifier drop into
sklearn tooling (``clone``, ``Pipeline``, ``cross_val_score``). The numerics
live in :mod:`shadowmia.model` and :mod:`shadowmia.attack`.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .attack import FEATURE_MODES, attack_features, fit_linear_svm
from .dataset import Dataset
from .model import Architecture, TrainConfig, forward_posterior, init_params, train


class SoftmaxMLPClassifier(ClassifierMixin, BaseEstimator):
    """Feed-forward softmax classifier trained by plain mini-batch SGD.

    Parameters
    ----------
    hidden_sizes : tuple of int, default=()
        Widths of the hidden layers. Empty gives multinomial logistic regression.
    activation : {'relu', 'tanh'}, default='relu'
    learning_rate : float, default=0.001
    max_epochs : int, default=80
    batch_size : int, default=32
    l2_penalty : float, default=0.0
    random_state : int, default=0
        Seeds both weight initialisation and the per-epoch shuffles.
    warm_start : bool, default=False
        When True and the estimator is already fitted, ``fit`` continues from
        the current parameters. This is how a shadow model is fine-tuned from
        a victim.

    Attributes
    ----------
    classes_ : ndarray
    params_ : ModelParams
    history_ : TrainHistory
    """

    def __init__(
        self,
        hidden_sizes=(),
        activation="relu",
        learning_rate=0.001,
        max_epochs=80,
        batch_size=32,
        l2_penalty=0.0,
        random_state=0,
        warm_start=False,
    ):
        self.hidden_sizes = hidden_sizes
        self.activation = activation
        self.learning_rate = learning_rate
        self.max_epochs = max_epochs
        self.batch_size = batch_size
        self.l2_penalty = l2_penalty
        self.random_state = random_state
        self.warm_start = warm_start

    def _train_config(self):
        return TrainConfig(
            learning_rate=self.learning_rate,
            max_epochs=self.max_epochs,
            batch_size=self.batch_size,
            l2_penalty=self.l2_penalty,
            seed=self.random_state,
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        check_classification_targets(y)
        if self.warm_start and hasattr(self, "params_"):
            if X.shape[1] != self.n_features_in_:
                raise ValueError(f"X has {X.shape[1]} features, model was fitted with {self.n_features_in_}")
            missing = np.setdiff1d(np.unique(y), self.classes_)
            if missing.size:
                raise ValueError(f"labels {missing.tolist()} were not seen in the first fit")
            start = self.params_
        else:
            self.classes_ = np.unique(y)
            self.n_features_in_ = X.shape[1]
            arch = Architecture(X.shape[1], tuple(self.hidden_sizes), len(self.classes_), self.activation)
            start = init_params(arch, self.random_state)
        y_enc = np.searchsorted(self.classes_, y)
        data = Dataset(X, y_enc, len(self.classes_))
        self.params_, self.history_ = train(start.architecture, start, data, self._train_config())
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        return forward_posterior(self.params_, X)

    def predict(self, X):
        check_is_fitted(self, "params_")
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]


class AttackFeatures(TransformerMixin, BaseEstimator):
    """Turn posteriors into attack features. ``y`` is ignored except in
    ``posterior_plus_label`` mode, where the true classes are passed via
    ``transform(X, labels)``."""

    def __init__(self, feature_mode="posterior"):
        self.feature_mode = feature_mode

    def fit(self, X, y=None):
        if self.feature_mode not in FEATURE_MODES:
            raise ValueError(f"feature_mode must be one of {FEATURE_MODES}")
        self.n_features_in_ = check_array(X).shape[1]
        return self

    def transform(self, X, labels=None):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X, dtype=np.float64)
        if self.feature_mode == "posterior_plus_label" and labels is None:
            raise ValueError("posterior_plus_label mode needs the true class labels")
        return attack_features(X, labels, self.feature_mode)


class LinearSVMClassifier(ClassifierMixin, BaseEstimator):
    """Binary linear soft-margin SVM fitted by deterministic subgradient descent.

    Parameters
    ----------
    regularization : float, default=1e-3
        Weight of the squared-norm penalty.
    epochs : int, default=2000
        Number of full-batch iterations.
    """

    def __init__(self, regularization=1e-3, epochs=2000):
        self.regularization = regularization
        self.epochs = epochs

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        check_classification_targets(y)
        self.classes_ = np.unique(y)
        if len(self.classes_) != 2:
            raise ValueError(f"LinearSVMClassifier needs exactly two classes, got {len(self.classes_)}")
        self.n_features_in_ = X.shape[1]
        signs = np.where(y == self.classes_[1], 1.0, -1.0)
        self.coef_, self.intercept_ = fit_linear_svm(X, signs, self.regularization, self.epochs)
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        return X @ self.coef_ + self.intercept_

    def predict(self, X):
        # score exactly 0 falls to the first (negative) class
        return self.classes_[(self.decision_function(X) > 0).astype(int)]
