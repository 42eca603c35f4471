"""Diagonal-covariance Gaussian mixtures fitted by expectation-maximization.

All density work is done in log space; responsibilities therefore stay
normalized to machine precision even for far-out points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import NumericalError

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class DiagGmm:
    """A K-component Gaussian mixture with diagonal covariances.

    Parameters
    ----------
    weights : (K,) mixture weights, strictly positive, summing to 1.
    means : (K, D) component means.
    variances : (K, D) per-dimension variances, strictly positive.
    loglik_trace : per-iteration total log-likelihoods recorded by the EM
        fit that produced this mixture, or None for hand-built mixtures.
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    loglik_trace: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        mu = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        var = np.atleast_2d(np.asarray(self.variances, dtype=np.float64))
        if mu.shape != var.shape or mu.shape[0] != w.shape[0]:
            raise ValueError(
                f"inconsistent mixture shapes: weights {w.shape}, means {mu.shape}, "
                f"variances {var.shape}"
            )
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"mixture weights sum to {w.sum()!r}, expected 1")
        if np.any(w <= 0):
            raise ValueError("mixture weights must be strictly positive")
        if np.any(var <= 0):
            raise ValueError("variances must be strictly positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", var)

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def weighted_log_densities(gmm: DiagGmm, X) -> np.ndarray:
    """log(pi_k) + log N(x_i; mu_k, var_k) for every point/component pair.

    X may be a single D-vector or an (n, D) array; the result is (n, K).
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != gmm.dim:
        raise ValueError(f"points have dimension {X.shape[1]}, mixture has {gmm.dim}")
    # (n, K): sum over D of log-normal terms
    diff2 = (X[:, None, :] - gmm.means[None, :, :]) ** 2
    log_norm = -0.5 * (
        np.sum(np.log(gmm.variances) + diff2 / gmm.variances, axis=2)
        + gmm.dim * _LOG_2PI
    )
    return np.log(gmm.weights)[None, :] + log_norm


def gmm_posteriors(gmm: DiagGmm, v) -> np.ndarray:
    """Component responsibilities gamma_k(v) = pi_k N_k(v) / sum_t pi_t N_t(v).

    Accepts a single vector (returns shape (K,)) or a batch (returns (n, K)).
    Rows sum to 1 up to machine precision.
    """
    v = np.asarray(v, dtype=np.float64)
    single = v.ndim == 1
    log_joint = weighted_log_densities(gmm, v)
    log_post = log_joint - logsumexp(log_joint, axis=1, keepdims=True)
    post = np.exp(log_post)
    return post[0] if single else post


def log_likelihood(gmm: DiagGmm, X) -> float:
    """Total log-likelihood of the rows of X under the mixture."""
    return float(logsumexp(weighted_log_densities(gmm, X), axis=1).sum())


def _kmeanspp_indices(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: first point uniform, then proportional to squared
    distance from the nearest already-chosen point."""
    n = X.shape[0]
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = rng.integers(n)
    d2 = np.sum((X - X[chosen[0]]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)  # remaining points coincide with centers
        chosen[j] = idx
        d2 = np.minimum(d2, np.sum((X - X[idx]) ** 2, axis=1))
    return chosen


def _variance_floor(pool_var: np.ndarray, var_floor: float) -> np.ndarray:
    """Per-dimension lower bound: var_floor * pool variance, falling back to
    the absolute var_floor on dimensions with zero spread."""
    floor = var_floor * pool_var
    floor[pool_var == 0] = var_floor
    return floor


def fit_diag_gmm(
    pool,
    k: int,
    *,
    max_iter: int = 300,
    tol: float = 1e-7,
    var_floor: float = 1e-6,
    seed: int = 0,
) -> DiagGmm:
    """Fit a K-component diagonal GMM to the pooled vectors by EM.

    Initialization is k-means++ seeding of the means, pooled per-dimension
    variance for every component, and uniform weights. Iteration stops when
    the relative change of the total log-likelihood drops below `tol` or
    after `max_iter` rounds. For k == 1 the closed form is used directly:
    mean of the pool, biased (1/n) variance, unit weight.

    The fitted mixture carries its per-iteration log-likelihood trace.

    Deterministic for a fixed seed.
    """
    X = np.atleast_2d(np.asarray(pool, dtype=np.float64))
    n, d = X.shape
    if k < 1:
        raise ValueError(f"component count must be >= 1, got {k}")
    if n < k:
        raise ValueError(f"pool of {n} vectors cannot support {k} components")

    pool_var = X.var(axis=0)
    if var_floor <= 0 and np.any(pool_var == 0):
        zero_dim = int(np.flatnonzero(pool_var == 0)[0])
        raise NumericalError(
            f"dimension {zero_dim} of the pool has zero variance and no variance "
            "floor is set"
        )
    floor = _variance_floor(pool_var, var_floor) if var_floor > 0 else np.zeros(d)

    if k == 1:
        mu = X.mean(axis=0, keepdims=True)
        var = np.maximum(X.var(axis=0, keepdims=True), floor[None, :])
        gmm = DiagGmm(weights=np.ones(1), means=mu, variances=var)
        trace = np.array([log_likelihood(gmm, X)])
        return DiagGmm(weights=gmm.weights, means=mu, variances=var, loglik_trace=trace)

    rng = np.random.default_rng(seed)
    means = X[_kmeanspp_indices(X, k, rng)].copy()
    variances = np.maximum(np.tile(pool_var, (k, 1)), floor[None, :])
    weights = np.full(k, 1.0 / k)

    trace = []
    prev_ll = None
    for _ in range(max_iter):
        gmm = DiagGmm(weights=weights, means=means, variances=variances)
        log_joint = weighted_log_densities(gmm, X)
        row_ll = logsumexp(log_joint, axis=1)
        ll = float(row_ll.sum())
        trace.append(ll)
        if prev_ll is not None and abs(ll - prev_ll) <= tol * abs(prev_ll):
            break
        prev_ll = ll

        resp = np.exp(log_joint - row_ll[:, None])  # (n, k)
        nk = resp.sum(axis=0)
        nk = np.maximum(nk, n * 1e-300)  # guard fully-starved components
        weights = nk / nk.sum()
        means = (resp.T @ X) / nk[:, None]
        diff2 = (X[:, None, :] - means[None, :, :]) ** 2
        variances = np.einsum("nk,nkd->kd", resp, diff2) / nk[:, None]
        variances = np.maximum(variances, floor[None, :])

    return DiagGmm(
        weights=weights,
        means=means,
        variances=variances,
        loglik_trace=np.asarray(trace),
    )
