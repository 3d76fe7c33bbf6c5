"""scikit-learn compatible front end."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .incremental import decision_scores, expand_classes, init_stat, one_hot, predict, rls_update
from .rpl import XiSchedule, make_rng, project
from .supervisory import ConstructionConfig, construct


class GuidedRPLClassifier(ClassifierMixin, TransformerMixin, BaseEstimator):
    """Random projection layer grown under residual supervision, with a ridge readout.

    ``fit`` builds the projection layer on the first task and fits the ridge
    classifier; ``partial_fit`` absorbs a further task with an exact recursive
    least-squares update, without revisiting earlier data. Classes seen for
    the first time in ``partial_fit`` are appended to ``classes_``.

    Parameters
    ----------
    strategy : {"mgsm", "scsm", "ri"}, default="mgsm"
        Residual-aligned block criterion, greedy single-unit criterion, or
        unguided sampling.
    r : float, default=0.99
        Contraction rate required per accepted block.
    epsilon : float, default=0.01
        Stop once the Frobenius norm of the training residual reaches this.
    reg_lambda : float, default=0.01
        Ridge penalty.
    block_size : int, default=50
        Hidden units per candidate block.
    n_candidates : int, default=10
        Candidate blocks drawn per sampling round.
    xi_min, delta_xi, xi_max : float
        Grid of Gaussian scales explored when no candidate is accepted.
    max_units : int or None
        Hard cap on hidden units; ``None`` uses ``20 * block_size * len(grid)``.
    ri_xi : float, default=1.0
        Sampling scale of the unguided strategy.
    per_column : bool, default=False
        Require the criterion for every output column separately.
    random_state : int, numpy Generator or None
    """

    def __init__(self, strategy="mgsm", r=0.99, epsilon=0.01, reg_lambda=0.01, block_size=50,
                 n_candidates=10, xi_min=0.0008, delta_xi=0.0001, xi_max=0.004, max_units=None,
                 ri_xi=1.0, per_column=False, random_state=None):
        self.strategy = strategy
        self.r = r
        self.epsilon = epsilon
        self.reg_lambda = reg_lambda
        self.block_size = block_size
        self.n_candidates = n_candidates
        self.xi_min = xi_min
        self.delta_xi = delta_xi
        self.xi_max = xi_max
        self.max_units = max_units
        self.ri_xi = ri_xi
        self.per_column = per_column
        self.random_state = random_state

    def _config(self) -> ConstructionConfig:
        return ConstructionConfig(
            r=self.r, epsilon=self.epsilon, s=self.block_size, b_max=self.n_candidates,
            lam=self.reg_lambda, xi_schedule=XiSchedule(self.xi_min, self.delta_xi, self.xi_max),
            max_units=self.max_units, strategy=self.strategy, per_column=self.per_column,
            ri_xi=self.ri_xi,
        )

    def _rng(self):
        if isinstance(self.random_state, np.random.Generator):
            return self.random_state
        return make_rng(self.random_state)

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        classes = np.unique(y)
        Y = one_hot(y, classes)
        model, state, diag = construct(X, Y, self._config(), self._rng())
        self.model_ = model
        self.stat_ = init_stat(state.features, state.weights, self.reg_lambda, classes)
        self.diagnostics_ = diag
        self.classes_ = np.asarray(self.stat_.classes_seen)
        self.n_features_in_ = X.shape[1]
        self.n_units_ = model.total_units
        return self

    def partial_fit(self, X, y):
        """Learn one more task; the first call behaves like ``fit``."""
        if not hasattr(self, "stat_"):
            return self.fit(X, y)
        X, y = check_X_y(X, y, dtype=np.float64)
        self._check_width(X)
        new = sorted(set(np.unique(y).tolist()) - set(self.stat_.classes_seen))
        stat = expand_classes(self.stat_, new)
        H = project(X, self.model_)
        self.stat_ = rls_update(stat, H, one_hot(y, stat.classes_seen))
        self.classes_ = np.asarray(self.stat_.classes_seen)
        return self

    def _check_width(self, X):
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        self._check_width(X)
        return project(X, self.model_)

    def decision_function(self, X):
        check_is_fitted(self, "stat_")
        X = check_array(X, dtype=np.float64)
        self._check_width(X)
        return decision_scores(self.stat_, self.model_, X)

    def predict(self, X):
        check_is_fitted(self, "stat_")
        X = check_array(X, dtype=np.float64)
        self._check_width(X)
        return predict(self.stat_, self.model_, X)
