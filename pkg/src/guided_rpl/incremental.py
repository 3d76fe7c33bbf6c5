"""Exemplar-free class-incremental ridge classifier over frozen RPL features.

The classifier keeps ``P_t = lam I + sum_k H_k^T H_k`` and the output weights.
A new task only needs its own features:

    P_t = P_{t-1} + H_t^T H_t
    W_t = W_{t-1} + P_t^{-1} H_t^T (Y_t - H_t W_{t-1})

which reproduces ridge regression on all tasks seen so far, provided the
label matrices of earlier tasks are zero-padded for classes that arrive later.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .exceptions import DimensionError, DuplicateClass
from .numerics import as_matrix, spd_factorize, symmetrize
from .rpl import RplModel, project

__all__ = [
    "SufficientStatistic",
    "init_stat",
    "expand_classes",
    "rls_update",
    "one_hot",
    "predict",
    "decision_scores",
]


@dataclass(frozen=True)
class SufficientStatistic:
    P: np.ndarray
    weights: np.ndarray
    classes_seen: tuple
    lam: float
    stage: int = 1

    @property
    def n_units(self) -> int:
        return self.P.shape[0]


def one_hot(labels, classes) -> np.ndarray:
    """One-hot rows over ``classes`` (in the given column order)."""
    labels = np.asarray(labels).reshape(-1)
    index = {c: i for i, c in enumerate(classes)}
    Y = np.zeros((labels.size, len(classes)))
    try:
        cols = [index[int(c)] for c in labels]
    except KeyError as exc:
        raise ValueError(f"label {exc.args[0]} is not among the known classes") from None
    Y[np.arange(labels.size), cols] = 1.0
    return Y


def init_stat(H_init, W_beta, lam: float, classes=None) -> SufficientStatistic:
    H_init = as_matrix(H_init, "H_init")
    W_beta = as_matrix(W_beta, "W_beta")
    L = H_init.shape[1]
    if W_beta.shape[0] != L:
        raise DimensionError(f"W_beta has {W_beta.shape[0]} rows, H_init has {L} columns")
    if classes is None:
        classes = range(W_beta.shape[1])
    classes = tuple(int(c) for c in classes)
    if len(classes) != W_beta.shape[1]:
        raise DimensionError(f"{len(classes)} class ids for {W_beta.shape[1]} weight columns")
    if len(set(classes)) != len(classes):
        raise DuplicateClass("class ids must be distinct")
    P = H_init.T @ H_init
    P[np.diag_indices(L)] += lam
    return SufficientStatistic(symmetrize(P), W_beta.copy(), classes, float(lam), 1)


def expand_classes(stat: SufficientStatistic, new_class_ids) -> SufficientStatistic:
    new = tuple(int(c) for c in new_class_ids)
    dup = set(new) & set(stat.classes_seen)
    if dup or len(set(new)) != len(new):
        raise DuplicateClass(f"classes already present: {sorted(dup) or new}")
    if not new:
        return stat
    pad = np.zeros((stat.weights.shape[0], len(new)))
    return replace(stat, weights=np.hstack([stat.weights, pad]), classes_seen=stat.classes_seen + new)


def rls_update(stat: SufficientStatistic, H_t, Y_t) -> SufficientStatistic:
    """Absorb one task's features and zero-padded one-hot labels."""
    H_t = as_matrix(H_t, "H_t")
    Y_t = as_matrix(Y_t, "Y_t")
    if H_t.shape[0] < 1:
        raise ValueError("a task must contain at least one sample")
    if H_t.shape[1] != stat.n_units:
        raise DimensionError(f"H_t has {H_t.shape[1]} columns, statistic has {stat.n_units}")
    if Y_t.shape != (H_t.shape[0], stat.weights.shape[1]):
        raise DimensionError(f"Y_t must have shape {(H_t.shape[0], stat.weights.shape[1])}, got {Y_t.shape}")
    P = symmetrize(stat.P + H_t.T @ H_t)
    correction = spd_factorize(P).solve(H_t.T @ (Y_t - H_t @ stat.weights))
    return replace(stat, P=P, weights=stat.weights + correction, stage=stat.stage + 1)


def decision_scores(stat: SufficientStatistic, model: RplModel, Z) -> np.ndarray:
    H = project(Z, model)
    if H.shape[1] != stat.n_units:
        raise DimensionError(f"model yields {H.shape[1]} units, statistic has {stat.n_units}")
    return H @ stat.weights


def predict(stat: SufficientStatistic, model: RplModel, Z) -> np.ndarray:
    """Highest-scoring class per row; exact ties go to the lowest class id."""
    scores = decision_scores(stat, model, Z)
    order = np.argsort(stat.classes_seen, kind="stable")
    ids = np.asarray(stat.classes_seen)[order]
    return ids[np.argmax(scores[:, order], axis=1)]
