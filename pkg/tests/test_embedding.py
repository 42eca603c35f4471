import numpy as np
import pytest

from zslkit.embedding import (
    class_landmarks,
    knn_affinity,
    lsm_embed,
    median_pairwise_distance,
    project,
    semantic_distance_matrix,
    slpp_fit,
)
from zslkit.encoders import SemanticSpace
from zslkit.errors import DataError, NumericalError


def make_blobs(rng, n_classes=3, per_class=20, d=10, spread=0.3, sep=5.0):
    centers = rng.normal(size=(n_classes, d)) * sep
    X = np.vstack([centers[c] + spread * rng.normal(size=(per_class, d)) for c in range(n_classes)])
    labels = np.repeat(np.arange(n_classes), per_class)
    return X, labels


def slpp_matrices(X, labels, n_neighbors, width, reg=1e-8):
    """Test-side reconstruction of the eigenproblem matrices."""
    W = knn_affinity(X, labels, n_neighbors, width).weights
    row = W.sum(axis=1)
    A = X.T @ (X * row[:, None] - W @ X)
    B = X.T @ (X * row[:, None])
    A = 0.5 * (A + A.T)
    B = 0.5 * (B + B.T)
    B[np.diag_indices(B.shape[0])] += reg * np.trace(B) / B.shape[0]
    return A, B


class TestKnnAffinity:
    def test_two_points_same_label(self):
        g = knn_affinity(np.array([[0.0], [1.0]]), [1, 1], n_neighbors=1, width=1.0)
        assert g.weights[0, 1] == pytest.approx(np.exp(-0.5))
        assert g.weights[0, 1] == g.weights[1, 0] > 0
        assert g.weights[0, 0] == g.weights[1, 1] == 0

    def test_two_points_different_labels_error(self):
        # singleton classes can never satisfy the positive-row invariant
        with pytest.raises(DataError, match="single example"):
            knn_affinity(np.array([[0.0], [1.0]]), [0, 1], n_neighbors=1, width=1.0)

    def test_blobs_within_class_edges_only(self):
        rng = np.random.default_rng(0)
        X, labels = make_blobs(rng)
        g = knn_affinity(X, labels, n_neighbors=5, width=1.0)
        rows, cols = np.nonzero(g.weights)
        assert np.all(labels[rows] == labels[cols])
        assert np.all(g.weights.sum(axis=1) > 0)
        np.testing.assert_allclose(g.weights, g.weights.T, atol=0)

    def test_neighbor_check_matches_direct_scan(self):
        rng = np.random.default_rng(1)
        X, labels = make_blobs(rng, n_classes=2, per_class=8, d=3)
        k = 3
        g = knn_affinity(X, labels, n_neighbors=k, width=2.0)
        n = X.shape[0]
        expect = np.zeros((n, n))
        for i in range(n):
            d2 = np.sum((X - X[i]) ** 2, axis=1)
            d2[i] = np.inf
            for j in np.argsort(d2, kind="stable")[:k]:
                if labels[i] == labels[j]:
                    expect[i, j] = np.exp(-d2[j] / (2 * 4.0))
        expect = np.maximum(expect, expect.T)
        np.testing.assert_allclose(g.weights, expect, atol=1e-15)

    def test_empty_row_fallback_connects_class(self):
        # class 1's points sit between class-0 points, so their nearest
        # neighbour is from the wrong class; the fallback joins them.
        X = np.array([[0.0], [0.4], [0.6], [1.0]])
        labels = np.array([0, 1, 1, 0])
        g = knn_affinity(X, labels, n_neighbors=1, width=1.0)
        assert g.weights[1, 2] > 0 and g.weights[2, 1] > 0
        assert np.all(g.weights.sum(axis=1) > 0)

    def test_invalid_width(self):
        with pytest.raises(ValueError):
            knn_affinity(np.zeros((3, 1)), [0, 0, 0], n_neighbors=1, width=0.0)


class TestSlpp:
    def test_eigen_residuals(self):
        rng = np.random.default_rng(2)
        for trial in range(5):
            X, labels = make_blobs(rng, d=8)
            width = median_pairwise_distance(X)
            model = slpp_fit(X, labels, d_latent=3, n_neighbors=5, width=width)
            A, B = slpp_matrices(X, labels, 5, width)
            for col, lam in zip(model.projection.T, model.eigenvalues):
                residual = np.linalg.norm(A @ col - lam * (B @ col)) / np.linalg.norm(col)
                assert residual < 1e-8, f"trial {trial}: residual {residual}"

    def test_constraint_orthonormality(self):
        rng = np.random.default_rng(3)
        X, labels = make_blobs(rng, d=6)
        width = median_pairwise_distance(X)
        model = slpp_fit(X, labels, d_latent=3, n_neighbors=5, width=width)
        _, B = slpp_matrices(X, labels, 5, width)
        gram = model.projection.T @ B @ model.projection
        assert np.abs(gram - np.eye(3)).max() < 1e-6

    def test_separates_blobs(self):
        rng = np.random.default_rng(4)
        X, labels = make_blobs(rng, n_classes=2, d=10)
        model = slpp_fit(X, labels, d_latent=2, n_neighbors=5)
        Y = project(model, X)
        within, between = [], []
        for i in range(len(Y)):
            for j in range(i + 1, len(Y)):
                d = np.linalg.norm(Y[i] - Y[j])
                (within if labels[i] == labels[j] else between).append(d)
        assert np.mean(within) < np.mean(between)

    def test_duplication_leaves_subspace(self):
        rng = np.random.default_rng(5)
        X, labels = make_blobs(rng, n_classes=2, per_class=10, d=6)
        width = median_pairwise_distance(X)
        m1 = slpp_fit(X, labels, d_latent=2, n_neighbors=3, width=width)
        m2 = slpp_fit(
            np.vstack([X, X]), np.concatenate([labels, labels]),
            d_latent=2, n_neighbors=3, width=width,
        )
        # principal angles between the two 2-D subspaces
        q1, _ = np.linalg.qr(m1.projection)
        q2, _ = np.linalg.qr(m2.projection)
        sv = np.linalg.svd(q1.T @ q2, compute_uv=False)
        angles = np.arccos(np.clip(sv, -1, 1))
        assert np.max(angles) < 1e-6

    def test_objective_beats_random_feasible_projections(self):
        rng = np.random.default_rng(6)
        X, labels = make_blobs(rng, d=6)
        width = median_pairwise_distance(X)
        model = slpp_fit(X, labels, d_latent=2, n_neighbors=5, width=width)
        A, B = slpp_matrices(X, labels, 5, width)
        fitted = np.trace(model.projection.T @ A @ model.projection)
        R = np.linalg.cholesky(B).T
        Rinv = np.linalg.inv(R)
        for _ in range(200):
            raw = rng.normal(size=(6, 2))
            Q, _ = np.linalg.qr(raw)
            P = Rinv @ Q
            value = np.trace(P.T @ A @ P)
            assert fitted <= value + 1e-9

    def test_too_many_dimensions_requested(self):
        rng = np.random.default_rng(7)
        X, labels = make_blobs(rng, n_classes=2, per_class=5, d=3)
        with pytest.raises(NumericalError):
            slpp_fit(X, labels, d_latent=10, n_neighbors=3)


class TestProject:
    def model(self):
        return slpp_fit(*make_blobs(np.random.default_rng(8), d=5), d_latent=2, n_neighbors=5)

    def test_zero_maps_to_zero(self):
        assert np.all(project(self.model(), np.zeros(5)) == 0)

    def test_linearity(self):
        m = self.model()
        rng = np.random.default_rng(9)
        x1, x2 = rng.normal(size=5), rng.normal(size=5)
        lhs = project(m, 2.0 * x1 - 3.0 * x2)
        rhs = 2.0 * project(m, x1) - 3.0 * project(m, x2)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_batch_equals_rowwise(self):
        m = self.model()
        X = np.random.default_rng(10).normal(size=(4, 5))
        batch = project(m, X)
        rows = np.vstack([project(m, x) for x in X])
        np.testing.assert_allclose(batch, rows, atol=0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            project(self.model(), np.zeros(7))


class TestLandmarks:
    def test_single_example_per_class(self):
        Y = np.array([[1.0, 2.0], [3.0, 4.0]])
        ids, lm = class_landmarks(Y, [5, 9])
        assert ids.tolist() == [5, 9]
        np.testing.assert_array_equal(lm, Y)

    def test_midpoint(self):
        Y = np.array([[0.0, 0.0], [2.0, 2.0]])
        _, lm = class_landmarks(Y, [0, 0])
        np.testing.assert_array_equal(lm, [[1.0, 1.0]])

    def test_permutation_invariance(self):
        rng = np.random.default_rng(11)
        Y = rng.normal(size=(10, 3))
        labels = np.array([0, 1] * 5)
        perm = rng.permutation(10)
        _, a = class_landmarks(Y, labels)
        _, b = class_landmarks(Y[perm], labels[perm])
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_missing_class_error(self):
        with pytest.raises(DataError):
            class_landmarks(np.zeros((2, 2)), [0, 0], class_ids=[0, 1])


class TestSemanticDistances:
    def test_identical_reps_distance_zero(self):
        space = SemanticSpace((0, 1), [[1.0, 2.0], [1.0, 2.0]], "cosine")
        D = semantic_distance_matrix(space)
        assert D[0, 1] == pytest.approx(0.0, abs=1e-12)

    def test_orthogonal_unit_reps_cosine(self):
        space = SemanticSpace((0, 1), [[1.0, 0.0], [0.0, 1.0]], "cosine")
        assert semantic_distance_matrix(space)[0, 1] == pytest.approx(1.0)

    def test_euclidean_1d(self):
        space = SemanticSpace((0, 1), [[0.0], [3.0]], "euclidean")
        assert semantic_distance_matrix(space)[0, 1] == pytest.approx(3.0)

    def test_zero_vector_cosine_error_names_class(self):
        space = SemanticSpace((4, 7), [[0.0, 0.0], [1.0, 0.0]], "cosine")
        with pytest.raises(DataError, match="4"):
            semantic_distance_matrix(space)

    def test_symmetric_zero_diagonal(self):
        rng = np.random.default_rng(12)
        space = SemanticSpace(tuple(range(5)), rng.normal(size=(5, 4)), "euclidean")
        D = semantic_distance_matrix(space)
        np.testing.assert_allclose(D, D.T, atol=0)
        assert np.all(np.diag(D) == 0)


def two_landmark_instance():
    """Feasible placement: landmarks at (0,0) and (2,0), one unseen class at
    semantic distance 1 from both. The seen-seen semantic distance of 2
    makes the latent/semantic scale exactly 1, so the analytic optimum is
    (1, 0) with zero stress."""
    landmarks = np.array([[0.0, 0.0], [2.0, 0.0]])
    dist = np.array(
        [
            [0.0, 2.0, 1.0],
            [2.0, 0.0, 1.0],
            [1.0, 1.0, 0.0],
        ]
    )
    return landmarks, [0, 1], dist, [0, 1, 2], [2]


class TestLsmEmbed:
    def test_two_landmark_analytic_optimum(self):
        landmarks, seen, dist, order, unseen = two_landmark_instance()
        Y, trace = lsm_embed(landmarks, seen, dist, order, unseen, seed=0)
        assert trace.final_stress < 1e-6
        assert abs(Y[0, 0] - 1.0) < 1e-3
        assert abs(Y[0, 1]) < 1e-3

    def test_zero_unseen_classes(self):
        landmarks, seen, dist, order, _ = two_landmark_instance()
        Y, trace = lsm_embed(landmarks, seen, dist[:2, :2], [0, 1], [], seed=0)
        assert Y.shape == (0, 2)
        assert trace.stresses.size == 0

    def test_stationary_start(self):
        landmarks, seen, dist, order, unseen = two_landmark_instance()
        Y, trace = lsm_embed(
            landmarks, seen, dist, order, unseen, init=np.array([[1.0, 0.0]])
        )
        assert trace.final_stress == pytest.approx(trace.stresses[0], abs=1e-10)

    def test_traces_non_increasing_random_instances(self):
        rng = np.random.default_rng(13)
        for trial in range(30):
            n_s = int(rng.integers(2, 6))
            n_u = int(rng.integers(1, 4))
            d = int(rng.integers(2, 4))
            landmarks = rng.normal(size=(n_s, d)) * 2
            pts = rng.normal(size=(n_s + n_u, d)) * 2
            dist = np.linalg.norm(pts[:, None] - pts[None, :], axis=2)
            order = list(range(n_s + n_u))
            _, trace = lsm_embed(
                landmarks, order[:n_s], dist, order, order[n_s:],
                max_iter=200, seed=trial,
            )
            assert np.all(np.diff(trace.stresses) <= 0)
            assert trace.final_stress <= trace.stresses[0]

    def test_rigid_motion_equivariance(self):
        rng = np.random.default_rng(14)
        landmarks = rng.normal(size=(4, 2))
        pts = rng.normal(size=(6, 2))
        dist = np.linalg.norm(pts[:, None] - pts[None, :], axis=2)
        order = list(range(6))
        init = rng.normal(size=(2, 2))
        theta = 0.7
        R = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        t = np.array([3.0, -1.0])
        Y1, tr1 = lsm_embed(landmarks, order[:4], dist, order, order[4:], init=init, max_iter=300)
        Y2, tr2 = lsm_embed(
            landmarks @ R.T + t, order[:4], dist, order, order[4:],
            init=init @ R.T + t, max_iter=300,
        )
        np.testing.assert_allclose(Y2, Y1 @ R.T + t, atol=1e-8)
        np.testing.assert_allclose(tr1.final_stress, tr2.final_stress, atol=1e-12)

    def test_nearest_landmark_tracks_semantic_proximity(self):
        rng = np.random.default_rng(15)
        landmarks = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
        # seen-seen distances from the landmark geometry keep scale = 1
        dist = np.zeros((4, 4))
        pts3 = landmarks
        for i in range(3):
            for j in range(3):
                dist[i, j] = np.linalg.norm(pts3[i] - pts3[j])
        eps = 0.05
        dist[3, 0] = dist[0, 3] = eps
        dist[3, 1] = dist[1, 3] = 10.0
        dist[3, 2] = dist[2, 3] = 10.0
        Y, _ = lsm_embed(landmarks, [0, 1, 2], dist, [0, 1, 2, 3], [3], seed=0)
        d_to_landmarks = np.linalg.norm(landmarks - Y[0], axis=1)
        assert np.argmin(d_to_landmarks) == 0

    def test_zero_semantic_distance_clamped_with_warning(self):
        landmarks, seen, dist, order, unseen = two_landmark_instance()
        dist = dist.copy()
        dist[2, 0] = dist[0, 2] = 0.0
        with pytest.warns(UserWarning, match="clamped"):
            Y, trace = lsm_embed(landmarks, seen, dist, order, unseen, max_iter=50, seed=0)
        assert np.all(np.isfinite(Y))

    def test_overlapping_seen_unseen_ids(self):
        landmarks, seen, dist, order, _ = two_landmark_instance()
        with pytest.raises(ValueError):
            lsm_embed(landmarks, seen, dist, order, [1])
