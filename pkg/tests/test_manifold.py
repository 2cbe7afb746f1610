import math

import numpy as np
import pytest
import scipy.sparse as sp

from embedspace.errors import KTooLarge
from embedspace.manifold import (
    FuzzyGraph,
    LayoutParams,
    exact_knn_graph,
    fit_ab,
    fuzzy_simplicial_set,
    initialize_layout,
    optimize_layout,
    smooth_knn_calibrate,
    symmetrize,
    umap,
)


def knn_graph_oracle(X, k):
    """Full pairwise sort per row, lower index wins distance ties."""
    n = X.shape[0]
    indices = np.empty((n, k), dtype=np.int64)
    distances = np.empty((n, k))
    for i in range(n):
        cand = sorted(
            (float(np.linalg.norm(X[i] - X[j])), j) for j in range(n) if j != i
        )
        for pos in range(k):
            distances[i, pos], indices[i, pos] = cand[pos]
    return indices, distances


class TestExactKnnGraph:
    def test_three_points_1d(self):
        g = exact_knn_graph(np.array([[0.0], [1.0], [3.0]]), k=1)
        assert list(g.indices.ravel()) == [1, 0, 1]
        assert list(g.distances.ravel()) == pytest.approx([1.0, 1.0, 2.0])

    def test_duplicates_lower_index_first(self):
        X = np.array([[0.0], [0.0], [0.0], [5.0]])
        g = exact_knn_graph(X, k=2)
        assert list(g.indices[3]) == [0, 1]
        assert g.distances[3, 0] == pytest.approx(5.0)
        assert list(g.indices[1]) == [0, 2]
        assert g.distances[1, 0] == 0.0

    def test_no_self_neighbors_sorted_rows(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(50, 4))
        g = exact_knn_graph(X, k=10)
        for i in range(50):
            assert i not in g.indices[i]
            assert np.all(np.diff(g.distances[i]) >= 0)

    def test_matches_pairwise_oracle(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(300, 8))
        g = exact_knn_graph(X, k=15)
        idx, dist = knn_graph_oracle(X, 15)
        assert np.array_equal(g.indices, idx)
        assert np.allclose(g.distances, dist, atol=1e-9)

    def test_k_too_large(self):
        with pytest.raises(KTooLarge):
            exact_knn_graph(np.zeros((3, 2)), k=3)


class TestSmoothKnnCalibrate:
    def test_closed_form_quadratic(self):
        # sum = 1 + t + t^2 with t = exp(-1/sigma); target log2(3)
        rho, sigma = smooth_knn_calibrate(np.array([1.0, 2.0, 3.0]), k=3)
        assert rho == 1.0
        target = math.log2(3) - 1.0
        t = (-1.0 + math.sqrt(1.0 + 4.0 * target)) / 2.0
        sigma_expected = -1.0 / math.log(t)
        assert sigma == pytest.approx(sigma_expected, abs=2e-3)

    def test_residual_small_on_nondegenerate_rows(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            d = np.sort(rng.uniform(0.1, 5.0, size=15))
            rho, sigma = smooth_knn_calibrate(d, k=15)
            total = np.sum(np.exp(-np.maximum(d - rho, 0.0) / sigma))
            assert abs(total - math.log2(15)) <= 1e-3

    def test_all_equal_distances_hits_clamp(self):
        d = np.full(5, 2.0)
        rho, sigma = smooth_knn_calibrate(d, k=5)
        assert rho == 2.0
        assert sigma == pytest.approx(1e-3 * 2.0)
        w = np.exp(-np.maximum(d - rho, 0.0) / sigma)
        assert np.all(w == 1.0)

    def test_rho_is_smallest_strictly_positive(self):
        rho, _ = smooth_knn_calibrate(np.array([0.0, 0.0, 5.0]), k=3)
        assert rho == 5.0

    def test_all_zero_distances(self):
        rho, sigma = smooth_knn_calibrate(np.zeros(4), k=4)
        assert rho == 0.0
        assert sigma > 0.0


class TestSymmetrize:
    def make(self, wij, wji):
        m = sp.csr_matrix(np.array([[0.0, wij], [wji, 0.0]]))
        return symmetrize(m).toarray()

    def test_one_sided_edge(self):
        assert self.make(0.5, 0.0)[0, 1] == pytest.approx(0.5)

    def test_tconorm_fixed_point(self):
        assert self.make(1.0, 1.0)[0, 1] == 1.0

    def test_mixed_weights(self):
        assert self.make(0.5, 0.4)[0, 1] == pytest.approx(0.7)

    def test_exact_bit_symmetry(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(80, 6))
        fg = fuzzy_simplicial_set(exact_knn_graph(X, 10))
        dense = fg.memberships.toarray()
        assert np.array_equal(dense, dense.T)

    def test_memberships_in_unit_interval_diag_empty(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(60, 5))
        fg = fuzzy_simplicial_set(exact_knn_graph(X, 8))
        vals = fg.memberships.data
        assert np.all(vals > 0.0) and np.all(vals <= 1.0)
        assert fg.memberships.diagonal().sum() == 0.0


# regression constants frozen from a least-squares oracle run: the fitted
# (a, b) and the residual RMSE at the global optimum, per min_dist
FIT_AB_REFERENCE = (1.5769434602697652, 0.8950608778515733)
FIT_AB_OPTIMAL_RMSE = {0.0: 0.0241595397, 0.1: 0.0161900502, 0.5: 0.0207164231}


class TestFitAb:
    def target_rmse(self, a, b, min_dist, spread):
        x = np.linspace(0.0, 3.0 * spread, 300)
        psi = np.where(x <= min_dist, 1.0, np.exp(-(x - min_dist) / spread))
        f = 1.0 / (1.0 + a * x ** (2.0 * b))
        return float(np.sqrt(np.mean((f - psi) ** 2)))

    def test_reference_values(self):
        a, b = fit_ab(0.1, 1.0)
        assert a == pytest.approx(FIT_AB_REFERENCE[0], rel=1e-6)
        assert b == pytest.approx(FIT_AB_REFERENCE[1], rel=1e-6)

    @pytest.mark.parametrize("min_dist", [0.0, 0.1, 0.5])
    def test_fit_reaches_least_squares_optimum(self, min_dist):
        a, b = fit_ab(min_dist, 1.0)
        assert self.target_rmse(a, b, min_dist, 1.0) == pytest.approx(
            FIT_AB_OPTIMAL_RMSE[min_dist], abs=1e-8
        )

    def test_a_decreases_with_min_dist(self):
        a_tight, _ = fit_ab(0.0, 1.0)
        a_loose, _ = fit_ab(0.5, 1.0)
        assert a_loose < a_tight

    def test_curve_value_at_zero(self):
        a, b = fit_ab(0.1, 1.0)
        assert 1.0 / (1.0 + a * 0.0 ** (2.0 * b)) == 1.0


def two_clique_graph():
    w = np.zeros((4, 4))
    w[0, 1] = w[1, 0] = 1.0
    w[2, 3] = w[3, 2] = 1.0
    return FuzzyGraph(
        memberships=sp.csr_matrix(w), rho=np.zeros(4), sigma=np.ones(4)
    )


class TestInitializeLayout:
    def test_output_shape_2d(self):
        fg = two_clique_graph()
        coords = initialize_layout(fg, 2, seed=0)
        assert coords.shape == (4, 2)

    def test_spectral_separates_cliques(self):
        # the 4-node Laplacian nullspace is spanned by the two clique
        # indicators, so some coordinate must be near-constant within each
        # clique and far apart between them
        fg = two_clique_graph()
        coords = initialize_layout(fg, 2, seed=0)
        separated = False
        for c in range(2):
            col = coords[:, c]
            within = max(abs(col[0] - col[1]), abs(col[2] - col[3]))
            between = abs(col[:2].mean() - col[2:].mean())
            if between > 1.0 and within < 0.01:
                separated = True
        assert separated

    def test_same_seed_identical(self):
        fg = two_clique_graph()
        a = initialize_layout(fg, 2, seed=9)
        b = initialize_layout(fg, 2, seed=9)
        assert np.array_equal(a, b)

    def test_high_dim_random_init(self):
        fg = two_clique_graph()
        coords = initialize_layout(fg, 50, seed=1)
        assert coords.shape == (4, 50)
        assert np.all(np.abs(coords) <= 10.0)


class TestOptimizeLayout:
    def test_two_points_attract(self):
        w = np.zeros((2, 2))
        w[0, 1] = w[1, 0] = 1.0
        fg = FuzzyGraph(memberships=sp.csr_matrix(w), rho=np.zeros(2), sigma=np.ones(2))
        init = np.array([[0.0, 0.0], [3.0, 0.0]])
        p = LayoutParams(n_components=2, seed=0, n_epochs=100)
        out = optimize_layout(fg, init.copy(), p)
        assert np.linalg.norm(out[0] - out[1]) < 3.0

    def test_coordinates_stay_finite_and_bounded(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(60, 8))
        fg = fuzzy_simplicial_set(exact_knn_graph(X, 10))
        init = initialize_layout(fg, 2, seed=0)
        out = optimize_layout(fg, init, LayoutParams(n_components=2, seed=0, n_epochs=200))
        assert np.all(np.isfinite(out))
        assert np.all(np.abs(out) < 1e3)

    def test_bit_identical_reruns(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(50, 4))
        fg = fuzzy_simplicial_set(exact_knn_graph(X, 8))
        init = initialize_layout(fg, 2, seed=3)
        p = LayoutParams(n_components=2, seed=3, n_epochs=50)
        a = optimize_layout(fg, init, p)
        b = optimize_layout(fg, init, p)
        assert np.array_equal(a, b)


def three_blobs(seed=0, n_per=100, dim=64, sep=5.0, sigma=0.1):
    rng = np.random.default_rng(seed)
    centers = np.zeros((3, dim))
    centers[1, 0] = sep
    centers[2, 1] = sep
    X = np.vstack([rng.normal(c, sigma, size=(n_per, dim)) for c in centers])
    labels = np.repeat([0, 1, 2], n_per)
    return X, labels


class TestUmap:
    def test_output_shapes(self):
        X, _ = three_blobs(dim=16)
        y2 = umap(X, LayoutParams(n_components=2, seed=0, n_epochs=50))
        assert y2.shape == (300, 2)

    def test_300d_shape(self):
        X, _ = three_blobs(dim=64)
        y = umap(X, LayoutParams(n_components=300, seed=0, n_epochs=50))
        assert y.shape == (300, 300)

    def test_requires_more_points_than_neighbors(self):
        with pytest.raises(KTooLarge):
            umap(np.zeros((10, 3)), LayoutParams(n_components=2, n_neighbors=15))

    def test_blob_structure_preserved_in_2d(self):
        from embedspace.core import LabelVector
        from embedspace.knn import balanced_macro_accuracy, confusion, knn_predict

        X, labels = three_blobs()
        Y = umap(X, LayoutParams(n_components=2, seed=0))
        lv = LabelVector(labels=labels, class_names=("a", "b", "c"))
        pred = knn_predict(Y, lv, Y, k=15)
        assert balanced_macro_accuracy(confusion(lv, pred)) >= 0.95

    def test_full_composition_deterministic(self):
        X, _ = three_blobs(dim=8, n_per=30)
        p = LayoutParams(n_components=2, seed=11, n_epochs=60)
        assert np.array_equal(umap(X, p), umap(X, p))
