"""From-scratch UMAP dimensionality reduction.

Pipeline: exact kNN graph -> smooth-kNN calibration (rho, sigma) -> fuzzy
graph symmetrized with the probabilistic t-conorm -> (a, b) curve fit ->
spectral or random initialization -> sampled attractive/repulsive SGD layout.
The whole composition is a pure function of (X, params, seed) when run
sequentially.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
from numba import njit
from scipy.optimize import curve_fit

from .errors import FitDiverged, KTooLarge, NonFiniteCoordinate, SpectralFailure

SMOOTH_KNN_ITERATIONS = 64
SMOOTH_KNN_TOL = 1e-5
SIGMA_CLAMP_FACTOR = 1e-3
GRAD_CLIP = 4.0
SPECTRAL_MAX_COMPONENTS = 10
INIT_RANGE = 10.0
JITTER_SCALE = 1e-4


@dataclass(frozen=True)
class KnnGraph:
    n_neighbors: int
    indices: np.ndarray  # (N, k) int64
    distances: np.ndarray  # (N, k) float64, ascending per row


@dataclass(frozen=True)
class FuzzyGraph:
    memberships: sp.csr_matrix  # symmetric, weights in (0, 1], empty diagonal
    rho: np.ndarray
    sigma: np.ndarray


@dataclass(frozen=True)
class LayoutParams:
    n_components: int
    n_neighbors: int = 15
    min_dist: float = 0.1
    spread: float = 1.0
    a: float | None = None  # fitted from (min_dist, spread) when None
    b: float | None = None
    n_epochs: int | None = None  # 500 if N <= 10_000 else 200 when None
    learning_rate: float = 1.0
    negative_sample_rate: int = 5
    repulsion_strength: float = 1.0
    seed: int = 0


def exact_knn_graph(X: np.ndarray, k: int) -> KnnGraph:
    """Exact Euclidean k nearest neighbors per row, self excluded.

    Distance ties resolve to the lower row index (stable sort).
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if k >= n:
        raise KTooLarge(f"k={k} must be below the number of points {n}")
    d2 = (
        np.sum(X ** 2, axis=1)[:, None]
        - 2.0 * X @ X.T
        + np.sum(X ** 2, axis=1)[None, :]
    )
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, np.inf)
    order = np.argsort(d2, axis=1, kind="stable")[:, :k]
    rows = np.arange(n)[:, None]
    return KnnGraph(
        n_neighbors=k,
        indices=order.astype(np.int64),
        distances=np.sqrt(d2[rows, order]),
    )


def smooth_knn_calibrate(row_distances: np.ndarray, k: int) -> tuple[float, float]:
    """Per-row (rho, sigma) for the fuzzy membership kernel.

    rho is the smallest strictly positive distance (0 if none); sigma solves
    sum_j exp(-max(0, d_j - rho) / sigma) = log2(k) by binary search, clamped
    below at 1e-3 times the mean row distance.
    """
    d = np.asarray(row_distances, dtype=np.float64)
    positive = d[d > 0.0]
    rho = float(positive[0]) if positive.size else 0.0
    target = np.log2(k)
    shifted = np.maximum(d - rho, 0.0)

    lo, hi, sigma = 0.0, np.inf, 1.0
    for _ in range(SMOOTH_KNN_ITERATIONS):
        val = float(np.sum(np.exp(-shifted / sigma))) if sigma > 0 else float(
            np.sum(shifted == 0.0)
        )
        if abs(val - target) < SMOOTH_KNN_TOL:
            break
        if val > target:
            hi = sigma
            sigma = 0.5 * (lo + hi)
        else:
            lo = sigma
            sigma = sigma * 2.0 if np.isinf(hi) else 0.5 * (lo + hi)
    clamp = SIGMA_CLAMP_FACTOR * float(d.mean()) if d.size else 0.0
    sigma = max(sigma, clamp, 1e-12)
    return rho, sigma


def symmetrize(directed: sp.spmatrix) -> sp.csr_matrix:
    """Probabilistic t-conorm w + w^T - w o w^T (exactly symmetric)."""
    directed = directed.tocsr()
    transpose = directed.T.tocsr()
    sym = directed + transpose - directed.multiply(transpose)
    sym = sym.tocsr()
    sym.eliminate_zeros()
    return sym


def fuzzy_simplicial_set(g: KnnGraph) -> FuzzyGraph:
    """Directed memberships exp(-max(0, d - rho)/sigma), symmetrized by the
    probabilistic t-conorm."""
    n, k = g.indices.shape
    rho = np.empty(n)
    sigma = np.empty(n)
    vals = np.empty((n, k))
    for i in range(n):
        rho[i], sigma[i] = smooth_knn_calibrate(g.distances[i], k)
        vals[i] = np.exp(-np.maximum(g.distances[i] - rho[i], 0.0) / sigma[i])
    rows = np.repeat(np.arange(n), k)
    directed = sp.coo_matrix(
        (vals.ravel(), (rows, g.indices.ravel())), shape=(n, n)
    ).tocsr()
    directed.sum_duplicates()
    return FuzzyGraph(memberships=symmetrize(directed), rho=rho, sigma=sigma)


def _membership_curve(x, a, b):
    return 1.0 / (1.0 + a * x ** (2.0 * b))


def fit_ab(min_dist: float, spread: float) -> tuple[float, float]:
    """Least-squares fit of 1/(1 + a x^(2b)) to the piecewise target curve."""
    if spread <= 0:
        raise FitDiverged("spread must be positive")
    x = np.linspace(0.0, 3.0 * spread, 300)
    psi = np.where(x <= min_dist, 1.0, np.exp(-(x - min_dist) / spread))
    try:
        (a, b), _ = curve_fit(_membership_curve, x, psi, p0=(1.0, 1.0), maxfev=5000)
    except RuntimeError as exc:
        raise FitDiverged(str(exc)) from exc
    if a <= 0 or b <= 0 or not np.isfinite(a) or not np.isfinite(b):
        raise FitDiverged(f"bad fit a={a}, b={b}")
    return float(a), float(b)


def initialize_layout(fg: FuzzyGraph, n_components: int, seed: int) -> np.ndarray:
    """Spectral initialization for low target dimensions, random above.

    Spectral uses the eigenvectors of the symmetric normalized Laplacian of
    the membership graph; on failure it falls back to random.
    """
    n = fg.memberships.shape[0]
    rng = np.random.default_rng([seed, 0x1A17])
    # keep the typical initial point norm dimension-independent; a flat
    # [-10, 10] box in hundreds of dimensions starts points too far apart
    # for the clipped SGD gradients to ever pull neighbors together
    rand_range = INIT_RANGE / np.sqrt(n_components)
    if n_components > SPECTRAL_MAX_COMPONENTS:
        return rng.uniform(-rand_range, rand_range, size=(n, n_components))
    try:
        coords = _spectral_coords(fg.memberships, n_components)
    except SpectralFailure:
        return rng.uniform(-rand_range, rand_range, size=(n, n_components))
    max_abs = np.max(np.abs(coords))
    if max_abs > 0:
        coords = coords * (INIT_RANGE / max_abs)
    coords = coords + rng.normal(0.0, JITTER_SCALE, size=coords.shape)
    return coords


def _spectral_coords(w: sp.csr_matrix, n_components: int) -> np.ndarray:
    n = w.shape[0]
    if n_components + 1 > n:
        raise SpectralFailure("not enough points for spectral init")
    deg = np.asarray(w.sum(axis=1)).ravel()
    if np.any(deg <= 0):
        raise SpectralFailure("isolated vertex in membership graph")
    inv_sqrt = 1.0 / np.sqrt(deg)
    lap = sp.identity(n) - sp.diags(inv_sqrt) @ w @ sp.diags(inv_sqrt)
    if n <= 2000:
        evals, evecs = np.linalg.eigh(lap.toarray())
    else:
        try:
            evals, evecs = sp.linalg.eigsh(lap, k=n_components + 1, sigma=0.0, which="LM")
        except Exception as exc:  # ARPACK can fail on hard spectra
            raise SpectralFailure(str(exc)) from exc
    order = np.argsort(evals)
    coords = evecs[:, order[1:n_components + 1]]
    if not np.all(np.isfinite(coords)):
        raise SpectralFailure("non-finite eigenvectors")
    return np.ascontiguousarray(coords, dtype=np.float64)


@njit(cache=True)
def _xorshift(state: np.uint64) -> np.uint64:
    state ^= state << np.uint64(13)
    state ^= state >> np.uint64(7)
    state ^= state << np.uint64(17)
    return state


@njit(cache=True)
def _optimize(
    embedding,
    heads,
    tails,
    epochs_per_sample,
    n_epochs,
    a,
    b,
    gamma,
    initial_alpha,
    negative_sample_rate,
    rng_state,
):
    n_points, dim = embedding.shape
    n_edges = heads.shape[0]
    epoch_of_next_sample = epochs_per_sample.copy()
    for epoch in range(n_epochs):
        alpha = initial_alpha * (1.0 - epoch / n_epochs)
        for e in range(n_edges):
            if epoch_of_next_sample[e] > epoch:
                continue
            h = heads[e]
            t = tails[e]
            d2 = 0.0
            for c in range(dim):
                diff = embedding[h, c] - embedding[t, c]
                d2 += diff * diff
            if d2 > 0.0:
                coeff = (-2.0 * a * b * d2 ** (b - 1.0)) / (1.0 + a * d2 ** b)
            else:
                coeff = 0.0
            for c in range(dim):
                grad = coeff * (embedding[h, c] - embedding[t, c])
                if grad > GRAD_CLIP:
                    grad = GRAD_CLIP
                elif grad < -GRAD_CLIP:
                    grad = -GRAD_CLIP
                embedding[h, c] += alpha * grad
                embedding[t, c] -= alpha * grad
            for _ in range(negative_sample_rate):
                rng_state = _xorshift(rng_state)
                j = int(rng_state % np.uint64(n_points))
                if j == h:
                    continue
                d2 = 0.0
                for c in range(dim):
                    diff = embedding[h, c] - embedding[j, c]
                    d2 += diff * diff
                coeff = (2.0 * gamma * b) / ((0.001 + d2) * (1.0 + a * d2 ** b))
                for c in range(dim):
                    grad = coeff * (embedding[h, c] - embedding[j, c])
                    if grad > GRAD_CLIP:
                        grad = GRAD_CLIP
                    elif grad < -GRAD_CLIP:
                        grad = -GRAD_CLIP
                    embedding[h, c] += alpha * grad
            epoch_of_next_sample[e] += epochs_per_sample[e]
        for p in range(n_points):
            for c in range(dim):
                if not np.isfinite(embedding[p, c]):
                    return epoch, p
    return -1, -1


def optimize_layout(fg: FuzzyGraph, init: np.ndarray, p: LayoutParams) -> np.ndarray:
    """Sampled attractive/repulsive SGD over the fuzzy graph edges."""
    coo = fg.memberships.tocoo()
    heads = coo.row.astype(np.int64)
    tails = coo.col.astype(np.int64)
    weights = coo.data.astype(np.float64)
    n_epochs = p.n_epochs
    if n_epochs is None:
        n_epochs = 500 if init.shape[0] <= 10_000 else 200
    a, b = p.a, p.b
    if a is None or b is None:
        a, b = fit_ab(p.min_dist, p.spread)
    w_max = weights.max() if weights.size else 1.0
    epochs_per_sample = w_max / weights if weights.size else weights
    embedding = np.ascontiguousarray(init, dtype=np.float64).copy()
    rng_state = np.uint64((p.seed * 0x9E3779B97F4A7C15 + 0x2545F4914F6CDD1D) & 0xFFFFFFFFFFFFFFFF)
    if rng_state == 0:
        rng_state = np.uint64(0xDEADBEEF)
    bad_epoch, bad_point = _optimize(
        embedding,
        heads,
        tails,
        epochs_per_sample,
        int(n_epochs),
        float(a),
        float(b),
        float(p.repulsion_strength),
        float(p.learning_rate),
        int(p.negative_sample_rate),
        rng_state,
    )
    if bad_epoch >= 0:
        raise NonFiniteCoordinate(epoch=int(bad_epoch), point=int(bad_point))
    return embedding


def umap(X: np.ndarray, p: LayoutParams) -> np.ndarray:
    """Full reduction: kNN graph, fuzzy graph, curve fit, init, layout."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] <= p.n_neighbors:
        raise KTooLarge(
            f"need more than n_neighbors={p.n_neighbors} points, got {X.shape[0]}"
        )
    graph = exact_knn_graph(X, p.n_neighbors)
    fg = fuzzy_simplicial_set(graph)
    if p.a is None or p.b is None:
        a, b = fit_ab(p.min_dist, p.spread)
        p = replace(p, a=a, b=b)
    init = initialize_layout(fg, p.n_components, p.seed)
    return optimize_layout(fg, init, p)
