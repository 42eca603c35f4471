"""Zero-shot recognition protocols and metrics.

Conventional evaluation searches labels among unseen classes only;
generalised evaluation searches seen and unseen classes jointly and
reports per-class accuracies for both groups plus their harmonic mean.
The transductive variant replaces per-example nearest-neighbour decisions
with structured prediction: k-means clustering of the whole test set
followed by a minimum-cost one-to-one map from clusters to classes.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DataError

METRIC_KEYS = ("A_UU", "A_UT", "A_ST", "H")


@dataclass(frozen=True)
class SearchSpace:
    """Class embeddings a test point is matched against.

    Rows are kept sorted by class id so that distance ties resolve to the
    smallest id.
    """

    class_ids: tuple[int, ...]
    embeddings: np.ndarray  # (C, d)
    mode: str  # "unseen_only" | "seen_plus_unseen"

    def __post_init__(self):
        ids = [int(c) for c in self.class_ids]
        emb = np.atleast_2d(np.asarray(self.embeddings, dtype=np.float64))
        if len(ids) != emb.shape[0]:
            raise ValueError(f"{len(ids)} class ids but {emb.shape[0]} embedding rows")
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate class ids in search space")
        if self.mode not in ("unseen_only", "seen_plus_unseen"):
            raise ValueError(f"unknown search-space mode {self.mode!r}")
        order = np.argsort(ids, kind="stable")
        object.__setattr__(self, "class_ids", tuple(ids[i] for i in order))
        object.__setattr__(self, "embeddings", emb[order])

    @classmethod
    def unseen_only(cls, class_ids, embeddings) -> "SearchSpace":
        return cls(tuple(class_ids), embeddings, "unseen_only")

    @classmethod
    def seen_plus_unseen(cls, seen_ids, seen_emb, unseen_ids, unseen_emb) -> "SearchSpace":
        ids = tuple(seen_ids) + tuple(unseen_ids)
        emb = np.vstack([np.atleast_2d(seen_emb), np.atleast_2d(unseen_emb)])
        return cls(ids, emb, "seen_plus_unseen")


def _distances(points: np.ndarray, embeddings: np.ndarray, metric: str) -> np.ndarray:
    if metric == "euclidean":
        out = np.empty((points.shape[0], embeddings.shape[0]))
        for start in range(0, points.shape[0], 2048):
            stop = min(start + 2048, points.shape[0])
            diff = points[start:stop, None, :] - embeddings[None, :, :]
            out[start:stop] = np.einsum("ijk,ijk->ij", diff, diff)
        return out  # squared; argmin-equivalent
    if metric == "cosine":
        p_norm = np.linalg.norm(points, axis=1)
        e_norm = np.linalg.norm(embeddings, axis=1)
        if np.any(p_norm == 0) or np.any(e_norm == 0):
            raise ValueError("cosine distance undefined for zero vectors")
        return 1.0 - (points @ embeddings.T) / np.outer(p_norm, e_norm)
    raise ValueError(f"unknown metric {metric!r}")


def classify_nn(points, space: SearchSpace, metric: str = "euclidean") -> np.ndarray:
    """Assign every point the id of its nearest class embedding.

    Exact distance ties resolve to the smallest class id.
    """
    if len(space.class_ids) == 0:
        raise ValueError("empty search space")
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    d = _distances(points, space.embeddings, metric)
    ids = np.asarray(space.class_ids)
    return ids[np.argmin(d, axis=1)]


def per_class_accuracy(pred, truth, class_set) -> float:
    """Mean over classes of the within-class accuracy.

    Robust to class imbalance: every class contributes equally regardless
    of its test-set size. Every class in class_set must have at least one
    test example.
    """
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"{pred.shape[0]} predictions for {truth.shape[0]} labels")
    classes = sorted(int(c) for c in class_set)
    if not classes:
        raise ValueError("empty class set")
    extra = set(truth.tolist()) - set(classes)
    if extra:
        raise ValueError(f"truth labels {sorted(extra)} outside the class set")
    acc = 0.0
    for c in classes:
        mask = truth == c
        if not mask.any():
            raise DataError(f"class {c} has no test examples")
        acc += float(np.mean(pred[mask] == c))
    return acc / len(classes)


def harmonic_mean(a_u: float, a_s: float) -> float:
    """2ab / (a + b), defined as 0 when both accuracies are 0."""
    if a_u + a_s == 0:
        return 0.0
    return 2.0 * a_u * a_s / (a_u + a_s)


def evaluate_czsl(points, truth, space: SearchSpace, metric: str = "euclidean") -> float:
    """Conventional setting: search unseen classes only, per-class accuracy."""
    if space.mode != "unseen_only":
        raise ValueError("conventional evaluation requires an unseen-only search space")
    pred = classify_nn(points, space, metric)
    return per_class_accuracy(pred, truth, space.class_ids)


@dataclass(frozen=True)
class GzslScores:
    a_unseen: float  # unseen-class test examples, searched over all classes
    a_seen: float  # held-out seen-class test examples, searched over all classes
    harmonic: float


def evaluate_gzsl(
    unseen_points,
    unseen_truth,
    seen_points,
    seen_truth,
    space: SearchSpace,
    metric: str = "euclidean",
) -> GzslScores:
    """Generalised setting: both test groups searched over seen + unseen.

    An empty unseen (or seen) test group scores 0 for its accuracy, which
    forces the harmonic mean to 0.
    """
    if space.mode != "seen_plus_unseen":
        raise ValueError("generalised evaluation requires a seen-plus-unseen space")
    unseen_truth = np.asarray(unseen_truth)
    seen_truth = np.asarray(seen_truth)
    if unseen_truth.size:
        pred_u = classify_nn(unseen_points, space, metric)
        a_u = per_class_accuracy(pred_u, unseen_truth, np.unique(unseen_truth))
    else:
        a_u = 0.0
    if seen_truth.size:
        pred_s = classify_nn(seen_points, space, metric)
        a_s = per_class_accuracy(pred_s, seen_truth, np.unique(seen_truth))
    else:
        a_s = 0.0
    return GzslScores(a_unseen=a_u, a_seen=a_s, harmonic=harmonic_mean(a_u, a_s))


@dataclass(frozen=True)
class KmeansResult:
    centroids: np.ndarray
    assignments: np.ndarray
    inertia: float


def _kmeanspp_centers(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = np.empty((k, X.shape[1]))
    idx = rng.integers(X.shape[0])
    centers[0] = X[idx]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        idx = rng.choice(X.shape[0], p=d2 / total) if total > 0 else rng.integers(X.shape[0])
        centers[j] = X[idx]
        d2 = np.minimum(d2, np.sum((X - centers[j]) ** 2, axis=1))
    return centers


def _lloyd(X: np.ndarray, centers: np.ndarray, max_iter: int) -> KmeansResult:
    k = centers.shape[0]
    assignments = None
    for _ in range(max_iter):
        d2 = _distances(X, centers, "euclidean")
        new_assign = np.argmin(d2, axis=1)
        # empty-cluster repair: move the centroid to the point farthest
        # from the centroid it is currently assigned to
        for c in range(k):
            if not np.any(new_assign == c):
                worst = int(np.argmax(d2[np.arange(X.shape[0]), new_assign]))
                centers[c] = X[worst]
                d2[:, c] = np.sum((X - centers[c]) ** 2, axis=1)
                new_assign = np.argmin(d2, axis=1)
        if assignments is not None and np.array_equal(new_assign, assignments):
            break
        assignments = new_assign
        for c in range(k):
            centers[c] = X[assignments == c].mean(axis=0)
    d2 = _distances(X, centers, "euclidean")
    assignments = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(X.shape[0]), assignments].sum())
    return KmeansResult(centroids=centers, assignments=assignments, inertia=inertia)


def kmeans(points, k: int, *, seed: int = 0, max_iter: int = 100, n_init: int = 1) -> KmeansResult:
    """Lloyd's algorithm from k-means++ seeding.

    Runs n_init seeded restarts and keeps the lowest inertia (ties break
    toward the earlier restart). Deterministic for a fixed seed.
    """
    X = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if X.shape[0] < k:
        raise ValueError(f"{X.shape[0]} points cannot form {k} clusters")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, n_init)):
        result = _lloyd(X, _kmeanspp_centers(X, k, rng), max_iter)
        if best is None or result.inertia < best.inertia:
            best = result
    return best


def optimal_assignment(cost) -> np.ndarray:
    """Minimum-total-cost bijection rows -> columns of a square cost matrix.

    Returns perm with perm[i] the column matched to row i.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"cost matrix must be square, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix contains non-finite entries")
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(cost.shape[0], dtype=np.int64)
    perm[rows] = cols
    return perm


@dataclass(frozen=True)
class ClusterAssignment:
    """Test-set clusters matched one-to-one onto candidate classes."""

    centroids: np.ndarray
    members: tuple  # members[c]: indices of the points in cluster c
    cluster_to_class: dict  # bijection cluster index -> class id

    def __post_init__(self):
        classes = list(self.cluster_to_class.values())
        if len(set(classes)) != len(classes) or len(classes) != self.centroids.shape[0]:
            raise ValueError("cluster-to-class map must be a bijection onto the classes")


def cluster_and_match(
    points,
    class_ids,
    embeddings,
    *,
    metric: str = "euclidean",
    seed: int = 0,
    n_init: int = 5,
    max_iter: int = 100,
) -> ClusterAssignment:
    """Cluster the points into one cluster per candidate class and match
    clusters to classes by the minimum-cost one-to-one assignment of
    centroid-to-embedding distances."""
    ids = sorted(int(c) for c in class_ids)
    emb = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    order = np.argsort([int(c) for c in class_ids], kind="stable")
    emb = emb[order]
    X = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if X.shape[0] < len(ids):
        raise ValueError(f"{X.shape[0]} test points cannot cover {len(ids)} classes")
    clusters = kmeans(X, len(ids), seed=seed, max_iter=max_iter, n_init=n_init)
    cost = _distances(clusters.centroids, emb, metric)
    perm = optimal_assignment(cost)
    members = tuple(
        np.flatnonzero(clusters.assignments == c) for c in range(len(ids))
    )
    return ClusterAssignment(
        centroids=clusters.centroids,
        members=members,
        cluster_to_class={c: ids[perm[c]] for c in range(len(ids))},
    )


def transductive_predict(
    points,
    class_ids,
    embeddings,
    *,
    metric: str = "euclidean",
    seed: int = 0,
    n_init: int = 5,
    max_iter: int = 100,
) -> np.ndarray:
    """Structured prediction over the whole test collection: every member
    of a cluster receives its matched class."""
    assignment = cluster_and_match(
        points, class_ids, embeddings,
        metric=metric, seed=seed, n_init=n_init, max_iter=max_iter,
    )
    n = np.atleast_2d(np.asarray(points)).shape[0]
    preds = np.empty(n, dtype=np.int64)
    for c, members in enumerate(assignment.members):
        preds[members] = assignment.cluster_to_class[c]
    return preds


@dataclass
class EvalReport:
    """Aggregated per-split metrics for one method under one setting."""

    dataset: str
    method: str
    setting: str  # "inductive" | "transductive"
    splits: list  # [{"split_index": int, metric: value, ...}]
    mean: dict = field(default_factory=dict)
    stderr: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)


def aggregate_metrics(split_metrics) -> tuple[dict, dict]:
    """Mean and standard error (sample stddev / sqrt(n)) per metric key.

    The harmonic mean is averaged per split, not recomputed from the
    averaged accuracies; the two disagree in general.
    """
    keys = [k for k in METRIC_KEYS if any(k_present(m, k) for m in split_metrics)]
    mean, stderr = {}, {}
    for key in keys:
        values = np.array([m[key] for m in split_metrics if k_present(m, key)])
        mean[key] = float(values.mean())
        if values.size > 1:
            stderr[key] = float(values.std(ddof=1) / np.sqrt(values.size))
        else:
            stderr[key] = 0.0
    return mean, stderr


def k_present(metrics: dict, key: str) -> bool:
    return key in metrics and metrics[key] is not None


def build_report(dataset, method, setting, split_metrics, config=None, seeds=None) -> EvalReport:
    mean, stderr = aggregate_metrics(split_metrics)
    return EvalReport(
        dataset=dataset,
        method=method,
        setting=setting,
        splits=list(split_metrics),
        mean=mean,
        stderr=stderr,
        config=dict(config or {}),
        seeds=dict(seeds or {}),
    )


def report_to_json(report: EvalReport) -> str:
    payload = {
        "dataset": report.dataset,
        "method": report.method,
        "setting": report.setting,
        "splits": report.splits,
        "mean": report.mean,
        "stderr": report.stderr,
        "config": report.config,
        "seeds": report.seeds,
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def save_report(report: EvalReport, path) -> None:
    Path(path).write_text(report_to_json(report), encoding="utf-8")


def load_report(path) -> EvalReport:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return EvalReport(
        dataset=payload["dataset"],
        method=payload["method"],
        setting=payload["setting"],
        splits=payload["splits"],
        mean=payload["mean"],
        stderr=payload["stderr"],
        config=payload.get("config", {}),
        seeds=payload.get("seeds", {}),
    )


def reports_to_csv(reports) -> str:
    """One row per (method, setting, metric) with mean and standard error."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["dataset", "method", "setting", "metric", "mean", "stderr"])
    for report in reports:
        for key in METRIC_KEYS:
            if key in report.mean:
                writer.writerow(
                    [
                        report.dataset,
                        report.method,
                        report.setting,
                        key,
                        repr(report.mean[key]),
                        repr(report.stderr[key]),
                    ]
                )
    return buf.getvalue()
