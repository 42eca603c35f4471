"""Two-stage latent embedding for zero-shot recognition.

Bottom-up: a supervised locality-preserving projection (SLPP) maps visual
features into a latent space where same-class neighbours stay close. Each
seen class then gets a landmark: the mean of its projected training
examples.

Top-down: unseen classes are placed in the same latent space by Sammon
mapping against the fixed landmarks, so that scaled semantic distances
between classes are preserved by latent Euclidean distances.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .encoders import SemanticSpace
from .errors import DataError, NumericalError

_MIN_STEP = 1e-30


@dataclass(frozen=True)
class AffinityGraph:
    """Symmetric non-negative within-class neighbourhood weights."""

    weights: np.ndarray  # (n, n), zero diagonal
    n_neighbors: int
    width: float


@dataclass(frozen=True)
class LatentModel:
    """Visual-to-latent projection plus class embeddings.

    Built in stages: slpp_fit supplies the projection, class_landmarks the
    seen-class landmarks, lsm_embed the unseen-class embeddings; use
    with_landmarks / with_unseen to attach the later stages.
    """

    projection: np.ndarray  # (d_visual, d_latent)
    d_latent: int
    eigenvalues: np.ndarray | None = field(default=None, compare=False)
    seen_class_ids: tuple[int, ...] = ()
    seen_landmarks: np.ndarray | None = None
    unseen_class_ids: tuple[int, ...] = ()
    unseen_embeddings: np.ndarray | None = None

    def with_landmarks(self, class_ids, landmarks) -> "LatentModel":
        return replace(
            self,
            seen_class_ids=tuple(int(c) for c in class_ids),
            seen_landmarks=np.asarray(landmarks, dtype=np.float64),
        )

    def with_unseen(self, class_ids, embeddings) -> "LatentModel":
        return replace(
            self,
            unseen_class_ids=tuple(int(c) for c in class_ids),
            unseen_embeddings=np.asarray(embeddings, dtype=np.float64),
        )


@dataclass(frozen=True)
class StressTrace:
    """Sammon stress after the initial placement and each accepted step."""

    stresses: np.ndarray
    final_stress: float
    restart_index: int


def _pairwise_sq_dists(X: np.ndarray, Y: np.ndarray, block: int = 2048) -> np.ndarray:
    """Exact squared Euclidean distances via explicit differences, blocked
    over rows of X to bound memory."""
    out = np.empty((X.shape[0], Y.shape[0]))
    for start in range(0, X.shape[0], block):
        stop = min(start + block, X.shape[0])
        diff = X[start:stop, None, :] - Y[None, :, :]
        out[start:stop] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def knn_affinity(X, labels, n_neighbors: int, width: float) -> AffinityGraph:
    """Heat-kernel weights between kNN pairs of the same class.

    W_ij = exp(-||x_i - x_j||^2 / (2 width^2)) when x_j lies within the
    n_neighbors smallest distinct positive distances from x_i (ties all
    included) and the labels agree, then symmetrized by max(W, W^T).
    Coincident pairs carry no geometry and are excluded from the
    neighbourhoods; counting distinct distances keeps the graph, and hence
    the projection, exactly invariant under duplicating every point.

    A row left empty falls back to connecting its point to every same-class
    point (coincident ones only as a last resort). A class with a single
    example can never satisfy the positive-row invariant while the diagonal
    stays zero, so it is an error.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    labels = np.asarray(labels)
    n = X.shape[0]
    if n < 2:
        raise ValueError("need at least two points to build an affinity graph")
    if not 0 < n_neighbors < n:
        raise ValueError(f"n_neighbors must be in [1, {n - 1}], got {n_neighbors}")
    if width <= 0:
        raise ValueError(f"kernel width must be positive, got {width}")

    d2 = _pairwise_sq_dists(X, X)
    np.fill_diagonal(d2, np.inf)

    same = labels[:, None] == labels[None, :]
    W = np.zeros((n, n))
    for i in range(n):
        positive = np.flatnonzero(np.isfinite(d2[i]) & (d2[i] > 0))
        if positive.size == 0:
            continue
        ranks = np.unique(d2[i, positive])
        cutoff = ranks[min(n_neighbors, ranks.size) - 1]
        neighbors = positive[d2[i, positive] <= cutoff]
        keep = neighbors[same[i, neighbors]]
        W[i, keep] = np.exp(-d2[i, keep] / (2.0 * width**2))
    W = np.maximum(W, W.T)

    empty = np.flatnonzero(W.sum(axis=1) == 0)
    for i in empty:
        mates = np.flatnonzero(same[i])
        mates = mates[mates != i]
        if mates.size == 0:
            raise DataError(
                f"class {labels[i]!r} has a single example; its graph row cannot "
                "be populated"
            )
        W[i, mates] = np.exp(-d2[i, mates] / (2.0 * width**2))
        W[mates, i] = W[i, mates]
    return AffinityGraph(weights=W, n_neighbors=n_neighbors, width=float(width))


def median_pairwise_distance(X) -> float:
    """Median of the positive pairwise Euclidean distances."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    d2 = _pairwise_sq_dists(X, X)
    upper = d2[np.triu_indices(X.shape[0], k=1)]
    positive = upper[upper > 0]
    if positive.size == 0:
        raise DataError("all points coincide; no positive pairwise distance")
    return float(np.sqrt(np.median(positive)))


def slpp_fit(
    X,
    labels,
    *,
    d_latent: int,
    n_neighbors: int = 10,
    width: float | None = None,
    width_scale: float = 1.0,
    reg: float = 1e-8,
) -> LatentModel:
    """Supervised locality-preserving projection.

    Solves the generalized eigenproblem

        (X^T L X) p = lambda (X^T D X) p

    where W is the supervised heat-kernel affinity graph, D its row-sum
    diagonal and L = D - W, keeping the eigenvectors of smallest eigenvalue.
    Columns whose projected coordinates are (near-)constant across the
    training examples carry no structure and are skipped. The constraint
    matrix X^T D X is regularized by reg * mean(trace) * I before the
    Cholesky-based reduction.

    If `width` is None it defaults to width_scale times the median pairwise
    distance of X.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    labels = np.asarray(labels)
    n, d = X.shape
    if labels.shape[0] != n:
        raise ValueError(f"{n} points but {labels.shape[0]} labels")
    if d_latent < 1:
        raise ValueError(f"d_latent must be >= 1, got {d_latent}")
    if width is None:
        width = width_scale * median_pairwise_distance(X)

    graph = knn_affinity(X, labels, n_neighbors=n_neighbors, width=width)
    row_sums = graph.weights.sum(axis=1)

    XD = X * row_sums[:, None]
    A = X.T @ (XD - graph.weights @ X)  # X^T (D - W) X
    B = X.T @ XD
    A = 0.5 * (A + A.T)
    B = 0.5 * (B + B.T)
    B[np.diag_indices(d)] += reg * np.trace(B) / d

    try:
        eigvals, eigvecs = scipy.linalg.eigh(A, B)
    except scipy.linalg.LinAlgError as e:
        raise NumericalError(
            f"constraint matrix is singular beyond regularization: {e}"
        ) from e

    kept = []
    for idx in range(eigvecs.shape[1]):
        y = X @ eigvecs[:, idx]
        if y.std() > 1e-9 * max(1.0, float(np.abs(y).max())):
            kept.append(idx)
        if len(kept) == d_latent:
            break
    if len(kept) < d_latent:
        raise NumericalError(
            f"only {len(kept)} informative latent directions available, "
            f"{d_latent} requested"
        )
    P = eigvecs[:, kept]
    return LatentModel(projection=P, d_latent=d_latent, eigenvalues=eigvals[kept])


def project(model: LatentModel, X) -> np.ndarray:
    """Map visual features into the latent space (row-wise linear map)."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != model.projection.shape[0]:
        raise ValueError(
            f"features have dimension {X.shape[-1]}, projection expects "
            f"{model.projection.shape[0]}"
        )
    return X @ model.projection


def class_landmarks(latent_points, labels, class_ids=None) -> tuple[np.ndarray, np.ndarray]:
    """Per-class means of latent points.

    Returns (class_ids, landmarks) with classes sorted ascending. When an
    explicit class_ids sequence is given, every listed class must have at
    least one point.
    """
    Y = np.atleast_2d(np.asarray(latent_points, dtype=np.float64))
    labels = np.asarray(labels)
    if class_ids is None:
        ids = np.unique(labels)
    else:
        ids = np.asarray(sorted(int(c) for c in class_ids))
    landmarks = np.empty((ids.shape[0], Y.shape[1]))
    for row, c in enumerate(ids):
        mask = labels == c
        if not mask.any():
            raise DataError(f"class {c} has no examples to average")
        landmarks[row] = Y[mask].mean(axis=0)
    return ids, landmarks


def semantic_distance_matrix(space: SemanticSpace) -> np.ndarray:
    """Pairwise distances between class representations under the space's
    metric. Cosine distance is 1 - cos(a, b) and rejects zero vectors."""
    reps = space.reps
    if reps.shape[0] < 2:
        raise ValueError("need at least two classes for a distance matrix")
    if space.metric == "euclidean":
        D = np.sqrt(np.maximum(_pairwise_sq_dists(reps, reps), 0.0))
    else:
        norms = np.linalg.norm(reps, axis=1)
        if np.any(norms == 0):
            bad = space.class_ids[int(np.flatnonzero(norms == 0)[0])]
            raise DataError(
                f"class {bad} has a zero representation; cosine distance undefined"
            )
        D = 1.0 - (reps @ reps.T) / np.outer(norms, norms)
        D = np.maximum(D, 0.0)
    D = 0.5 * (D + D.T)
    np.fill_diagonal(D, 0.0)
    return D


def _sammon_stress(Y, landmarks, delta_us, delta_uu, sum_delta):
    d_us = np.sqrt(np.maximum(_pairwise_sq_dists(Y, landmarks), 0.0))
    stress = np.sum((delta_us - d_us) ** 2 / delta_us)
    if Y.shape[0] > 1:
        d_uu = np.sqrt(np.maximum(_pairwise_sq_dists(Y, Y), 0.0))
        iu = np.triu_indices(Y.shape[0], k=1)
        stress += np.sum((delta_uu[iu] - d_uu[iu]) ** 2 / delta_uu[iu])
    return stress / sum_delta


def _sammon_gradient(Y, landmarks, delta_us, delta_uu, sum_delta):
    eps = 1e-12
    d_us = np.sqrt(np.maximum(_pairwise_sq_dists(Y, landmarks), 0.0))
    coef = (delta_us - d_us) / (delta_us * np.maximum(d_us, eps))  # (u, s)
    diff = Y[:, None, :] - landmarks[None, :, :]
    grad = np.einsum("us,usd->ud", coef, diff)
    if Y.shape[0] > 1:
        d_uu = np.sqrt(np.maximum(_pairwise_sq_dists(Y, Y), 0.0))
        coef_uu = (delta_uu - d_uu) / (np.maximum(delta_uu, eps) * np.maximum(d_uu, eps))
        np.fill_diagonal(coef_uu, 0.0)
        diff_uu = Y[:, None, :] - Y[None, :, :]
        grad += np.einsum("uv,uvd->ud", coef_uu, diff_uu)
    return -2.0 * grad / sum_delta


def _descend(Y0, landmarks, delta_us, delta_uu, sum_delta, lr, max_iter, tol):
    """Gradient descent with step halving; steps that would increase the
    stress are rejected. Returns (Y, accepted stress values)."""
    Y = Y0.copy()
    stress = _sammon_stress(Y, landmarks, delta_us, delta_uu, sum_delta)
    trace = [stress]
    step = lr
    for _ in range(max_iter):
        grad = _sammon_gradient(Y, landmarks, delta_us, delta_uu, sum_delta)
        accepted = False
        while step >= _MIN_STEP:
            Y_new = Y - step * grad
            s_new = _sammon_stress(Y_new, landmarks, delta_us, delta_uu, sum_delta)
            if s_new <= stress:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        Y = Y_new
        change = stress - s_new
        stress = s_new
        trace.append(stress)
        step = min(step * 2.0, 1e12)
        if stress == 0.0 or change <= tol * max(stress, 1e-300):
            break
    return Y, np.asarray(trace)


def lsm_embed(
    landmarks,
    seen_ids,
    dist_semantic,
    class_order,
    unseen_ids,
    *,
    lr: float = 0.1,
    max_iter: int = 2000,
    tol: float = 1e-9,
    restarts: int = 5,
    seed: int = 0,
    init=None,
) -> tuple[np.ndarray, StressTrace]:
    """Place unseen classes in the latent space by landmark Sammon mapping.

    Minimizes the Sammon stress

        E = (1/sum delta) * sum_pairs (delta_pq - d_pq)^2 / delta_pq

    over all seen-unseen and unseen-unseen class pairs, where d is latent
    Euclidean distance and delta is the semantic distance rescaled so the
    semantic and latent scales are commensurate (times mean pairwise
    landmark distance over mean seen-seen semantic distance). Landmarks
    never move.

    Each restart initializes an unseen class at the inverse-distance
    weighted average of the landmarks plus seeded jitter of width 1e-3 and
    descends with step halving; the restart with the lowest final stress
    wins, ties broken by restart index. Passing `init` (an (n_unseen,
    d_latent) array) replaces the seeded initialization and runs a single
    descent.

    Returns (unseen_embeddings, StressTrace) with rows ordered by ascending
    unseen class id.
    """
    landmarks = np.atleast_2d(np.asarray(landmarks, dtype=np.float64))
    dist_semantic = np.asarray(dist_semantic, dtype=np.float64)
    class_pos = {int(c): i for i, c in enumerate(class_order)}
    seen_ids = [int(c) for c in seen_ids]
    unseen_ids = sorted(int(c) for c in unseen_ids)
    if landmarks.shape[0] != len(seen_ids):
        raise ValueError(f"{len(seen_ids)} seen ids but {landmarks.shape[0]} landmarks")
    if set(seen_ids) & set(unseen_ids):
        raise ValueError("seen and unseen class sets overlap")
    missing = [c for c in seen_ids + unseen_ids if c not in class_pos]
    if missing:
        raise ValueError(f"classes {missing} missing from the semantic distance matrix")

    n_u, d_latent = len(unseen_ids), landmarks.shape[1]
    if n_u == 0:
        return (
            np.zeros((0, d_latent)),
            StressTrace(stresses=np.zeros(0), final_stress=0.0, restart_index=0),
        )

    s_idx = np.array([class_pos[c] for c in seen_ids])
    u_idx = np.array([class_pos[c] for c in unseen_ids])

    # commensurate scale between the semantic and latent spaces
    if len(seen_ids) >= 2:
        iu = np.triu_indices(len(seen_ids), k=1)
        lm_mean = np.sqrt(
            np.maximum(_pairwise_sq_dists(landmarks, landmarks), 0.0)
        )[iu].mean()
        sem_mean = dist_semantic[np.ix_(s_idx, s_idx)][iu].mean()
        if sem_mean > 0 and lm_mean > 0:
            scale = lm_mean / sem_mean
        else:
            warnings.warn("degenerate seen-class distances; target scale set to 1")
            scale = 1.0
    else:
        scale = 1.0

    delta_us = dist_semantic[np.ix_(u_idx, s_idx)] * scale
    delta_uu = dist_semantic[np.ix_(u_idx, u_idx)] * scale

    off_uu = ~np.eye(n_u, dtype=bool)
    targets = np.concatenate([delta_us.ravel(), delta_uu[off_uu]])
    positive = targets[targets > 0]
    if positive.size == 0:
        raise DataError("all semantic target distances are zero")
    if np.any(targets == 0):
        clamp = 1e-6 * positive.mean()
        warnings.warn(
            f"zero semantic distance between distinct classes; clamped to {clamp:g}"
        )
        delta_us = np.maximum(delta_us, clamp)
        delta_uu = np.where(off_uu, np.maximum(delta_uu, clamp), delta_uu)

    iu = np.triu_indices(n_u, k=1)
    sum_delta = delta_us.sum() + (delta_uu[iu].sum() if n_u > 1 else 0.0)

    if init is not None:
        starts = [np.asarray(init, dtype=np.float64).reshape(n_u, d_latent)]
    else:
        inv = 1.0 / delta_us
        base = (inv / inv.sum(axis=1, keepdims=True)) @ landmarks
        seeds = np.random.SeedSequence(seed).spawn(restarts)
        starts = [
            base + np.random.default_rng(s).normal(0.0, 1e-3, size=(n_u, d_latent))
            for s in seeds
        ]

    best = None
    for r, Y0 in enumerate(starts):
        Y, trace = _descend(Y0, landmarks, delta_us, delta_uu, sum_delta, lr, max_iter, tol)
        if best is None or trace[-1] < best[2][-1]:
            best = (r, Y, trace)
    r, Y, trace = best
    return Y, StressTrace(stresses=trace, final_stress=float(trace[-1]), restart_index=r)
