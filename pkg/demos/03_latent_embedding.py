"""The two-stage latent embedding on labelled Gaussian blobs.

Bottom-up: supervised locality-preserving projection compresses the
visual features while keeping same-class neighbours close. Top-down:
unseen classes are placed among the seen-class landmarks by Sammon
mapping against semantic distances.
"""

import numpy as np

from zslkit import (
    SemanticSpace,
    class_landmarks,
    lsm_embed,
    project,
    semantic_distance_matrix,
    slpp_fit,
)

rng = np.random.default_rng(2)

# Six classes with planted 2-D structure lifted into 15-D visual space.
true_points = np.array([
    [0.0, 0.0], [4.0, 0.0], [0.0, 4.0],   # seen
    [4.0, 4.0], [2.0, 2.0], [6.0, 2.0],   # unseen
])
lift, _ = np.linalg.qr(rng.normal(size=(15, 2)))
labels = np.repeat(np.arange(6), 30)
X = true_points[labels] @ lift.T + 0.1 * rng.normal(size=(180, 15))

seen, unseen = [0, 1, 2], [3, 4, 5]
train = np.isin(labels, seen)

print("== bottom-up: supervised projection ==")
model = slpp_fit(X[train], labels[train], d_latent=2, n_neighbors=8)
print(f"projection: {model.projection.shape}, eigenvalues {model.eigenvalues.round(6)}")
latent = project(model, X[train])
ids, landmarks = class_landmarks(latent, labels[train])
print("seen-class landmarks:\n", landmarks.round(3))

print("\n== top-down: place unseen classes from semantic distances ==")
# the semantic space here is the planted geometry plus mild noise
space = SemanticSpace(tuple(range(6)), true_points + 0.02 * rng.normal(size=(6, 2)), "euclidean")
dist = semantic_distance_matrix(space)
embeddings, trace = lsm_embed(landmarks, seen, dist, list(range(6)), unseen, seed=0)
print(f"restart {trace.restart_index} won with final stress {trace.final_stress:.2e} "
      f"after {trace.stresses.size - 1} accepted steps")
print("unseen embeddings:\n", embeddings.round(3))

print("\n== do projected unseen examples land near their embeddings? ==")
test = ~train
pts = project(model, X[test])
for row, c in enumerate(unseen):
    cluster = pts[labels[test] == c].mean(axis=0)
    err = np.linalg.norm(cluster - embeddings[row])
    spacing = min(
        np.linalg.norm(embeddings[row] - embeddings[r])
        for r in range(len(unseen)) if r != row
    )
    print(f"class {c}: placement error {err:.3f} vs nearest other embedding {spacing:.3f}")
