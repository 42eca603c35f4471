"""End-to-end evaluation over class splits.

Per split: hold out seen-class test examples if the generalised protocol is
requested, fit the supervised projection on the training examples, average
per-class landmarks, place unseen classes by landmark Sammon mapping
against the semantic distances, then score every requested setting.

Splits run in a thread pool; each split derives its own seeds from the
master seed and the split index, so reports are identical for any worker
count.
"""

from __future__ import annotations

import itertools
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import data_io, embedding, zsl_eval
from .encoders import SemanticSpace
from .errors import ConfigError, DataError
from .zsl_eval import SearchSpace

DEFAULT_CV_GRID = {
    "d_latent": (20, 50, 100),
    "n_neighbors": (5, 10, 20),
    "width_scale": (0.5, 1.0, 2.0),
}


@dataclass
class EvalConfig:
    """Resolved hyperparameters and protocol flags for one evaluation run."""

    d_latent: int = 20
    n_neighbors: int = 10
    width_scale: float = 1.0
    width: float | None = None
    holdout_fraction: float = 0.2
    lsm_lr: float = 0.1
    lsm_max_iter: int = 2000
    lsm_restarts: int = 5
    lsm_tol: float = 1e-9
    latent_metric: str = "euclidean"
    kmeans_n_init: int = 5
    kmeans_max_iter: int = 100
    czsl: bool = True
    gzsl: bool = True
    transductive: bool = True
    cv: bool = False
    cv_n_folds: int = 5
    cv_grid: dict = field(default_factory=lambda: dict(DEFAULT_CV_GRID))
    seed: int = 0

    def settings(self) -> list:
        out = ["inductive"]
        if self.transductive:
            out.append("transductive")
        return out


def derive_seed(master: int, *path) -> int:
    """Stable integer sub-seed for a labelled position in the run tree."""
    seq = np.random.SeedSequence([int(master), *[int(p) for p in path]])
    return int(seq.generate_state(1)[0])


def worker_count(n_tasks: int, requested: int | None = None) -> int:
    """Threads for a pool of n_tasks, capped by the ZSLKIT_THREADS env var."""
    workers = requested if requested else (os.cpu_count() or 1)
    cap = os.environ.get("ZSLKIT_THREADS")
    if cap:
        try:
            workers = min(workers, max(1, int(cap)))
        except ValueError as e:
            raise ConfigError(f"ZSLKIT_THREADS must be an integer, got {cap!r}") from e
    return max(1, min(workers, n_tasks))


def _clip_hyperparameters(cfg: EvalConfig, n_train: int, d_visual: int) -> EvalConfig:
    d_latent = min(cfg.d_latent, d_visual, n_train - 1)
    n_neighbors = min(cfg.n_neighbors, n_train - 1)
    if d_latent != cfg.d_latent or n_neighbors != cfg.n_neighbors:
        out = EvalConfig(**asdict(cfg))
        out.d_latent = d_latent
        out.n_neighbors = n_neighbors
        return out
    return cfg


def _fit_and_embed(features, labels, train_idx, seen_ids, unseen_ids, dist_sem,
                   class_order, cfg: EvalConfig, lsm_seed: int):
    """Shared core: projection, landmarks, unseen placement."""
    X_train = features[train_idx]
    y_train = labels[train_idx]
    cfg = _clip_hyperparameters(cfg, X_train.shape[0], X_train.shape[1])
    model = embedding.slpp_fit(
        X_train,
        y_train,
        d_latent=cfg.d_latent,
        n_neighbors=cfg.n_neighbors,
        width=cfg.width,
        width_scale=cfg.width_scale,
    )
    latent_train = embedding.project(model, X_train)
    ids, landmarks = embedding.class_landmarks(latent_train, y_train, class_ids=seen_ids)
    unseen_sorted = sorted(int(c) for c in unseen_ids)
    unseen_emb, trace = embedding.lsm_embed(
        landmarks,
        ids.tolist(),
        dist_sem,
        class_order,
        unseen_sorted,
        lr=cfg.lsm_lr,
        max_iter=cfg.lsm_max_iter,
        tol=cfg.lsm_tol,
        restarts=cfg.lsm_restarts,
        seed=lsm_seed,
    )
    model = model.with_landmarks(ids.tolist(), landmarks).with_unseen(unseen_sorted, unseen_emb)
    return model, trace


def evaluate_split(features, labels, space: SemanticSpace, split, cfg: EvalConfig) -> dict:
    """All requested metrics for one seen/unseen split.

    Returns {"inductive": {...}, "transductive": {...}} with metric keys
    A_UU (conventional) and A_UT/A_ST/H (generalised) as requested.
    """
    class_order = list(space.class_ids)
    missing = (set(split.seen) | set(split.unseen)) - set(class_order)
    if missing:
        raise DataError(f"semantic space lacks classes {sorted(missing)}")
    dist_sem = embedding.semantic_distance_matrix(space)

    seed_holdout = derive_seed(cfg.seed, split.split_index, 0)
    seed_lsm = derive_seed(cfg.seed, split.split_index, 1)
    seed_kmeans = derive_seed(cfg.seed, split.split_index, 2)

    labels = np.asarray(labels)
    if cfg.gzsl:
        part = data_io.gzsl_holdout(labels, split, cfg.holdout_fraction, seed_holdout)
        train_idx = part.train
        seen_test_idx = part.seen_test
        unseen_test_idx = part.unseen_test
    else:
        train_idx = np.flatnonzero(np.isin(labels, list(split.seen)))
        seen_test_idx = np.zeros(0, dtype=np.int64)
        unseen_test_idx = np.flatnonzero(np.isin(labels, list(split.unseen)))

    model, _ = _fit_and_embed(
        features, labels, train_idx, sorted(split.seen), sorted(split.unseen),
        dist_sem, class_order, cfg, seed_lsm,
    )

    unseen_ids = list(model.unseen_class_ids)
    unseen_pts = embedding.project(model, features[unseen_test_idx])
    unseen_truth = labels[unseen_test_idx]
    metric = cfg.latent_metric

    out = {s: {"split_index": split.split_index} for s in cfg.settings()}

    if cfg.czsl:
        space_u = SearchSpace.unseen_only(unseen_ids, model.unseen_embeddings)
        out["inductive"]["A_UU"] = zsl_eval.evaluate_czsl(
            unseen_pts, unseen_truth, space_u, metric
        )
        if cfg.transductive:
            pred = zsl_eval.transductive_predict(
                unseen_pts,
                unseen_ids,
                model.unseen_embeddings,
                metric=metric,
                seed=seed_kmeans,
                n_init=cfg.kmeans_n_init,
                max_iter=cfg.kmeans_max_iter,
            )
            out["transductive"]["A_UU"] = zsl_eval.per_class_accuracy(
                pred, unseen_truth, unseen_ids
            )

    if cfg.gzsl:
        seen_pts = embedding.project(model, features[seen_test_idx])
        seen_truth = labels[seen_test_idx]
        space_t = SearchSpace.seen_plus_unseen(
            model.seen_class_ids,
            model.seen_landmarks,
            unseen_ids,
            model.unseen_embeddings,
        )
        scores = zsl_eval.evaluate_gzsl(
            unseen_pts, unseen_truth, seen_pts, seen_truth, space_t, metric
        )
        out["inductive"].update(
            {"A_UT": scores.a_unseen, "A_ST": scores.a_seen, "H": scores.harmonic}
        )
        if cfg.transductive:
            combined = np.vstack([unseen_pts, seen_pts])
            pred = zsl_eval.transductive_predict(
                combined,
                space_t.class_ids,
                space_t.embeddings,
                metric=metric,
                seed=derive_seed(cfg.seed, split.split_index, 3),
                n_init=cfg.kmeans_n_init,
                max_iter=cfg.kmeans_max_iter,
            )
            n_u = unseen_pts.shape[0]
            a_ut = zsl_eval.per_class_accuracy(
                pred[:n_u], unseen_truth, np.unique(unseen_truth)
            )
            a_st = zsl_eval.per_class_accuracy(
                pred[n_u:], seen_truth, np.unique(seen_truth)
            )
            out["transductive"].update(
                {"A_UT": a_ut, "A_ST": a_st, "H": zsl_eval.harmonic_mean(a_ut, a_st)}
            )
    return out


def pseudo_czsl_accuracy(features, labels, space, fold, cfg: EvalConfig, seed: int) -> float:
    """Conventional accuracy with a fold's pseudo-unseen classes held out."""
    labels = np.asarray(labels)
    class_order = list(space.class_ids)
    dist_sem = embedding.semantic_distance_matrix(space)
    train_idx = np.flatnonzero(np.isin(labels, list(fold.pseudo_seen)))
    test_idx = np.flatnonzero(np.isin(labels, list(fold.pseudo_unseen)))
    model, _ = _fit_and_embed(
        features, labels, train_idx, sorted(fold.pseudo_seen),
        sorted(fold.pseudo_unseen), dist_sem, class_order, cfg, seed,
    )
    pts = embedding.project(model, features[test_idx])
    space_u = SearchSpace.unseen_only(model.unseen_class_ids, model.unseen_embeddings)
    return zsl_eval.evaluate_czsl(pts, labels[test_idx], space_u, cfg.latent_metric)


def select_hyperparameters(features, labels, space, seen_classes, cfg: EvalConfig) -> dict:
    """Class-wise cross-validation over the configured grid.

    The grid is scanned in its declared order; the first combination
    attaining the best mean pseudo-conventional accuracy wins.
    """
    folds = data_io.cv_folds(seen_classes, cfg.cv_n_folds, derive_seed(cfg.seed, 97))
    grid_keys = list(cfg.cv_grid)
    best = None
    for combo_index, combo in enumerate(itertools.product(*cfg.cv_grid.values())):
        trial = EvalConfig(**asdict(cfg))
        for key, value in zip(grid_keys, combo):
            setattr(trial, key, value)
        scores = [
            pseudo_czsl_accuracy(
                features, labels, space, fold, trial,
                derive_seed(cfg.seed, 98, combo_index, fold.fold_index),
            )
            for fold in folds
        ]
        mean = float(np.mean(scores))
        if best is None or mean > best[0]:
            best = (mean, dict(zip(grid_keys, combo)))
    return best[1]


def run_evaluation(
    dataset_name: str,
    features,
    labels,
    space: SemanticSpace,
    splits,
    cfg: EvalConfig,
    method: str = "unknown",
    workers: int | None = None,
) -> dict:
    """Evaluate every split and aggregate into one report per setting.

    With cfg.cv enabled, hyperparameters are re-selected per split by
    class-wise cross-validation on that split's seen classes before the
    split is scored.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)

    def run_one(split):
        split_cfg = cfg
        chosen = None
        if cfg.cv:
            chosen = select_hyperparameters(features, labels, space, split.seen, cfg)
            split_cfg = EvalConfig(**{**asdict(cfg), **chosen})
        metrics = evaluate_split(features, labels, space, split, split_cfg)
        if chosen:
            for setting in metrics:
                metrics[setting]["cv_selected"] = chosen
        return metrics

    pool_size = worker_count(len(splits), workers)
    if pool_size == 1:
        results = [run_one(s) for s in splits]
    else:
        with ThreadPoolExecutor(max_workers=pool_size) as pool:
            results = list(pool.map(run_one, splits))

    config_echo = asdict(cfg)
    config_echo["cv_grid"] = {k: list(v) for k, v in cfg.cv_grid.items()}
    seeds = {
        "master": cfg.seed,
        "per_split": {
            str(s.split_index): {
                "holdout": derive_seed(cfg.seed, s.split_index, 0),
                "lsm": derive_seed(cfg.seed, s.split_index, 1),
                "kmeans": derive_seed(cfg.seed, s.split_index, 2),
            }
            for s in splits
        },
    }
    reports = {}
    for setting in cfg.settings():
        reports[setting] = zsl_eval.build_report(
            dataset_name,
            method,
            setting,
            [r[setting] for r in results],
            config=config_echo,
            seeds=seeds,
        )
    return reports
