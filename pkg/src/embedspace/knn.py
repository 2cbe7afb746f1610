"""Exact kNN classification and balanced macro accuracy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import LabelVector
from .errors import DimMismatch, EmptyClass, KExceedsTrain, LengthMismatch, UnknownClass


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # (C, C) int64, rows true, columns predicted

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)


def _pairwise_sq_dists(query_X: np.ndarray, train_X: np.ndarray) -> np.ndarray:
    d2 = (
        np.sum(query_X ** 2, axis=1)[:, None]
        - 2.0 * query_X @ train_X.T
        + np.sum(train_X ** 2, axis=1)[None, :]
    )
    np.maximum(d2, 0.0, out=d2)
    return d2


def knn_predict(
    train_X: np.ndarray,
    train_y: LabelVector,
    query_X: np.ndarray,
    k: int = 15,
    metric: str = "euclidean",
) -> LabelVector:
    """Majority vote over the k Euclidean-nearest training points.

    Deterministic tie-breaking: equal distances prefer the lower training-row
    index; a tied vote prefers the class whose supporting neighbors have the
    smaller summed distance, then the lower class index.
    """
    train_X = np.asarray(train_X, dtype=np.float64)
    query_X = np.asarray(query_X, dtype=np.float64)
    if train_X.shape[1] != query_X.shape[1]:
        raise DimMismatch(f"train dim {train_X.shape[1]} != query dim {query_X.shape[1]}")
    n_train = train_X.shape[0]
    if k > n_train:
        raise KExceedsTrain(f"k={k} exceeds {n_train} training points")
    if metric == "euclidean":
        d2 = _pairwise_sq_dists(query_X, train_X)
        dist = np.sqrt(d2)
    elif metric == "cosine":
        tn = train_X / np.maximum(np.linalg.norm(train_X, axis=1, keepdims=True), 1e-12)
        qn = query_X / np.maximum(np.linalg.norm(query_X, axis=1, keepdims=True), 1e-12)
        dist = 1.0 - qn @ tn.T
    else:
        raise ValueError(f"unknown metric {metric!r}")

    n_classes = train_y.n_classes
    y = train_y.labels
    preds = np.empty(query_X.shape[0], dtype=np.int64)
    # stable sort keeps lower training-row index first on distance ties
    order = np.argsort(dist, axis=1, kind="stable")[:, :k]
    for q in range(query_X.shape[0]):
        neigh = order[q]
        votes = np.zeros(n_classes, dtype=np.int64)
        dist_sum = np.zeros(n_classes, dtype=np.float64)
        for idx in neigh:
            c = y[idx]
            votes[c] += 1
            dist_sum[c] += dist[q, idx]
        top = votes.max()
        tied = np.flatnonzero(votes == top)
        if tied.size == 1:
            preds[q] = tied[0]
        else:
            best = min(tied, key=lambda c: (dist_sum[c], c))
            preds[q] = best
    return LabelVector(labels=preds, class_names=train_y.class_names)


def confusion(y_true: LabelVector, y_pred: LabelVector) -> ConfusionMatrix:
    if len(y_true) != len(y_pred):
        raise LengthMismatch(f"{len(y_true)} vs {len(y_pred)} labels")
    if y_true.class_names != y_pred.class_names:
        raise UnknownClass("true and predicted labelings use different class universes")
    c = y_true.n_classes
    counts = np.zeros((c, c), dtype=np.int64)
    np.add.at(counts, (y_true.labels, y_pred.labels), 1)
    return ConfusionMatrix(counts=counts)


def balanced_macro_accuracy(cm: ConfusionMatrix) -> float:
    """Unweighted mean of per-class recall."""
    counts = cm.counts
    support = counts.sum(axis=1)
    empty = np.flatnonzero(support == 0)
    if empty.size:
        raise EmptyClass(int(empty[0]))
    recalls = np.diag(counts) / support
    return float(recalls.mean())
