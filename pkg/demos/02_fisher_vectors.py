"""Fisher encoding over a diagonal GMM, from the ground up.

Fits a mixture by EM, inspects responsibilities, encodes bags, and checks
the defining property numerically: the encoding equals the rescaled
gradient of the bag log-likelihood with respect to the mixture means and
deviations.
"""

import numpy as np

from zslkit import DiagGmm, VectorBag, fisher_encode, fit_diag_gmm, gmm_posteriors
from zslkit.gmm import log_likelihood

rng = np.random.default_rng(1)

print("== fit a 2-component mixture on two clusters ==")
pool = np.vstack([
    rng.normal([-2.0, 0.0], 0.4, size=(200, 2)),
    rng.normal([2.0, 1.0], 0.6, size=(200, 2)),
])
gmm = fit_diag_gmm(pool, k=2, seed=0)
print("weights:  ", gmm.weights.round(3))
print("means:\n", gmm.means.round(3))
print("variances:\n", gmm.variances.round(3))
print(f"EM iterations: {gmm.loglik_trace.size}, "
      f"final log-likelihood {gmm.loglik_trace[-1]:.2f}")
print("log-likelihood deltas (should never be negative):",
      np.diff(gmm.loglik_trace)[:5].round(6), "...")

print("\n== responsibilities ==")
probe = np.array([[-2.0, 0.0], [2.0, 1.0], [0.0, 0.5]])
for v, post in zip(probe, gmm_posteriors(gmm, probe)):
    print(f"  point {v}: {post.round(4)} (sums to {post.sum():.12f})")

print("\n== encode bags ==")
bag_left = VectorBag(0, rng.normal([-2.0, 0.0], 0.4, size=(30, 2)))
bag_both = VectorBag(1, pool[rng.permutation(400)[:30]])
for bag in (bag_left, bag_both):
    fv = fisher_encode(gmm, bag)
    print(f"class {bag.class_id}: encoding dim {fv.shape[0]} (= 2*D*K), "
          f"norm {np.linalg.norm(fv):.3f}")

print("\n== gradient identity check ==")
bag = VectorBag(2, rng.normal(size=(10, 2)))
fv = fisher_encode(gmm, bag)
h = 1e-5
sigma = np.sqrt(gmm.variances)
fd = np.empty_like(fv)
K, D = gmm.n_components, gmm.dim
for k in range(K):
    for d in range(D):
        for block in (0, 1):
            def ll(eps):
                means = gmm.means.copy()
                variances = gmm.variances.copy()
                if block == 0:
                    means[k, d] += eps
                else:
                    variances[k, d] = (sigma[k, d] + eps) ** 2
                return log_likelihood(DiagGmm(gmm.weights, means, variances), bag.vectors)

            grad = (ll(h) - ll(-h)) / (2 * h)
            scale = sigma[k, d] / np.sqrt(gmm.weights[k] * (1.0 if block == 0 else 2.0))
            fd[block * K * D + k * D + d] = scale * grad
rel = np.linalg.norm(fv - fd) / np.linalg.norm(fd)
print(f"relative error between encoding and rescaled numeric gradient: {rel:.2e}")
