"""K-Means clustering and Adjusted Mutual Information.

K-Means is k-means++ seeded Lloyd iteration with restarts; AMI is the
arithmetic-mean normalized variant, with the expected MI computed under the
hypergeometric permutation model via log-gamma.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .core import LabelVector
from .errors import KTooLarge, LengthMismatch

KMEANS_DEFAULTS = {"n_init": 10, "max_iter": 300, "tol": 1e-4}


@dataclass(frozen=True)
class Clustering:
    assignments: np.ndarray  # (N,) int64 in [0, k)
    centroids: np.ndarray  # (k, D) float64
    inertia: float
    iterations: int
    seed: int
    degenerate: bool = False  # all points identical with k > 1
    inertia_history: tuple[float, ...] = ()  # per Lloyd iteration, best restart


@dataclass(frozen=True)
class ContingencyTable:
    counts: np.ndarray  # (R, C) int64

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)

    @property
    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def col_sums(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def _kmeans_pp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: each next centroid drawn with probability
    proportional to squared distance from the nearest chosen centroid."""
    n = X.shape[0]
    centroids = np.empty((k, X.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centroids[0] = X[first]
    d2 = np.sum((X - centroids[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))  # all points coincide with a centroid
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[i] = X[idx]
        d2 = np.minimum(d2, np.sum((X - centroids[i]) ** 2, axis=1))
    return centroids


def _assign(X: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # (N, k) squared distances; ties go to the lower cluster index via argmin
    d2 = (
        np.sum(X ** 2, axis=1)[:, None]
        - 2.0 * X @ centroids.T
        + np.sum(centroids ** 2, axis=1)[None, :]
    )
    np.maximum(d2, 0.0, out=d2)
    labels = np.argmin(d2, axis=1)
    return labels, d2[np.arange(X.shape[0]), labels]


def _lloyd(X, k, rng, max_iter, tol):
    centroids = _kmeans_pp_init(X, k, rng)
    labels, dist2 = _assign(X, centroids)
    history = [float(dist2.sum())]
    iterations = 0
    for it in range(1, max_iter + 1):
        new_centroids = centroids.copy()
        for c in range(k):
            members = labels == c
            if members.any():
                new_centroids[c] = X[members].mean(axis=0)
            else:
                # reseed an empty cluster to the point farthest from its
                # current centroid
                new_centroids[c] = X[int(np.argmax(dist2))]
        shift = float(np.max(np.sqrt(np.sum((new_centroids - centroids) ** 2, axis=1))))
        centroids = new_centroids
        labels, dist2 = _assign(X, centroids)
        history.append(float(dist2.sum()))
        iterations = it
        if shift < tol:
            break
    return labels, centroids, history, iterations


def kmeans_fit(
    X: np.ndarray,
    k: int,
    seed: int = 0,
    n_init: int = KMEANS_DEFAULTS["n_init"],
    max_iter: int = KMEANS_DEFAULTS["max_iter"],
    tol: float = KMEANS_DEFAULTS["tol"],
) -> Clustering:
    """Best of n_init restarts of (k-means++ seeding, Lloyd iteration).

    Deterministic given (seed, n_init): restart r uses the RNG stream
    derived from (seed, r).
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    n = X.shape[0]
    if k > n:
        raise KTooLarge(f"k={k} exceeds {n} points")
    degenerate = bool(n > 0 and k > 1 and np.all(X == X[0]))
    best = None
    for r in range(n_init):
        rng = np.random.default_rng([seed, r])
        labels, centroids, history, iterations = _lloyd(X, k, rng, max_iter, tol)
        if best is None or history[-1] < best[2][-1]:
            best = (labels, centroids, history, iterations)
    labels, centroids, history, iterations = best
    return Clustering(
        assignments=labels.astype(np.int64),
        centroids=centroids,
        inertia=history[-1],
        iterations=iterations,
        seed=seed,
        degenerate=degenerate,
        inertia_history=tuple(history),
    )


def build_contingency(u: LabelVector, v: LabelVector) -> ContingencyTable:
    if len(u) != len(v):
        raise LengthMismatch(f"{len(u)} vs {len(v)} labels")
    counts = np.zeros((u.n_classes, v.n_classes), dtype=np.int64)
    np.add.at(counts, (u.labels, v.labels), 1)
    return ContingencyTable(counts=counts)


def mutual_information(ct: ContingencyTable) -> float:
    """MI in nats over the nonzero cells; 64-bit accumulation."""
    n = ct.total
    counts = ct.counts
    a = ct.row_sums.astype(np.float64)
    b = ct.col_sums.astype(np.float64)
    nz = counts > 0
    nij = counts[nz].astype(np.float64)
    outer = np.outer(a, b)[nz]
    mi = float(np.sum((nij / n) * np.log(n * nij / outer)))
    return max(mi, 0.0)


def entropy_from_counts(counts: np.ndarray) -> float:
    """Shannon entropy (nats) of a marginal count vector."""
    counts = np.asarray(counts, dtype=np.float64)
    n = counts.sum()
    p = counts[counts > 0] / n
    return float(-np.sum(p * np.log(p)))


def expected_mutual_information(ct: ContingencyTable) -> float:
    """E[MI] over all tables with the same margins (permutation model).

    The inner sum over feasible cell values uses log-gamma for the
    hypergeometric term; everything accumulates in float64.
    """
    n = ct.total
    a = ct.row_sums
    b = ct.col_sums
    if n == 0 or len(a) == 1 or len(b) == 1:
        return 0.0
    gln_a = gammaln(a + 1.0)
    gln_b = gammaln(b + 1.0)
    gln_na = gammaln(n - a + 1.0)
    gln_nb = gammaln(n - b + 1.0)
    gln_n = gammaln(n + 1.0)
    emi = 0.0
    for i in range(len(a)):
        ai = int(a[i])
        if ai == 0:
            continue
        for j in range(len(b)):
            bj = int(b[j])
            if bj == 0:
                continue
            start = max(1, ai + bj - n)
            end = min(ai, bj)
            for nij in range(start, end + 1):
                term = (nij / n) * np.log(n * nij / (ai * bj))
                lnp = (
                    gln_a[i] + gln_b[j] + gln_na[i] + gln_nb[j]
                    - gln_n
                    - gammaln(nij + 1.0)
                    - gammaln(ai - nij + 1.0)
                    - gammaln(bj - nij + 1.0)
                    - gammaln(n - ai - bj + nij + 1.0)
                )
                emi += term * float(np.exp(lnp))
    return emi


def adjusted_mutual_info(
    u: LabelVector, v: LabelVector, normalizer: str = "arithmetic"
) -> float:
    """AMI = (MI - E[MI]) / (norm(H(u), H(v)) - E[MI]).

    `normalizer` is "arithmetic" (default) or "max"; both labelings trivial
    (zero denominator with MI == E[MI]) scores exactly 1.0.
    """
    return adjusted_mutual_info_from_table(build_contingency(u, v), normalizer)


def adjusted_mutual_info_from_table(
    ct: ContingencyTable, normalizer: str = "arithmetic"
) -> float:
    """AMI computed directly from a prebuilt contingency table."""
    nz = ct.counts > 0
    if np.all(nz.sum(axis=1) == 1) and np.all(nz.sum(axis=0) == 1):
        return 1.0  # permuted diagonal: perfect agreement up to relabeling
    mi = mutual_information(ct)
    emi = expected_mutual_information(ct)
    h_u = entropy_from_counts(ct.row_sums)
    h_v = entropy_from_counts(ct.col_sums)
    if normalizer == "arithmetic":
        norm = 0.5 * (h_u + h_v)
    elif normalizer == "max":
        norm = max(h_u, h_v)
    else:
        raise ValueError(f"unknown normalizer {normalizer!r}")
    denom = norm - emi
    if denom == 0.0:
        return 1.0 if mi == emi else 0.0
    return (mi - emi) / denom
