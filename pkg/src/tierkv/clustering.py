"""Spherical k-means over key vectors.

Keys are centered (segment mean subtracted) and normalized before
clustering, so assignment is driven by direction rather than magnitude.
Callers recompute arithmetic-mean centroids over the *raw* keys afterwards;
the spherical centroids here only steer the partition.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    """Unit-normalize rows; all-zero rows map to the first basis vector."""
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    zero = norms[:, 0] == 0.0
    out = np.divide(x, norms, out=np.zeros_like(x), where=norms != 0.0)
    if zero.any():
        out[zero, 0] = 1.0
    return out


def _seed_centroids(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++-style seeding under cosine distance (points are unit norm)."""
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]), dtype=points.dtype)
    first = int(rng.integers(n))
    centroids[0] = points[first]
    # min cosine distance to any chosen seed so far
    min_dist = np.clip(1.0 - points @ centroids[0], 0.0, None)
    for i in range(1, k):
        cdf = np.cumsum(min_dist)
        if cdf[-1] <= 0.0:
            idx = int(rng.integers(n))  # degenerate: all points coincide
        else:
            idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
            idx = min(idx, n - 1)
        centroids[i] = points[idx]
        np.minimum(min_dist, np.clip(1.0 - points @ centroids[i], 0.0, None), out=min_dist)
    return centroids


def _repair_empty(points, assignment, centroids, counts):
    """Reseed each empty cluster with the point farthest from its centroid.

    Only points from clusters with more than one member are stolen, so
    repair never creates a new empty cluster.
    """
    sims = None
    for c in np.flatnonzero(counts == 0):
        if sims is None:
            sims = np.einsum("ij,ij->i", points, centroids[assignment])
        movable = counts[assignment] > 1
        candidates = np.where(movable, sims, np.inf)
        victim = int(np.argmin(candidates))
        counts[assignment[victim]] -= 1
        assignment[victim] = c
        counts[c] = 1
        centroids[c] = points[victim]
        sims[victim] = 1.0


def spherical_kmeans(keys: np.ndarray, k: int, iters: int, seed) -> np.ndarray:
    """Cluster keys into k groups; returns an assignment array of shape (n,).

    Every cluster in the returned assignment is non-empty (requires n >= k).
    Deterministic for a fixed seed.
    """
    keys = np.asarray(keys, dtype=np.float32)
    n = keys.shape[0]
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    if k > n:
        raise ConfigError(f"k={k} exceeds number of keys n={n}")
    if k == 1:
        return np.zeros(n, dtype=np.int64)

    rng = np.random.default_rng(seed)
    points = _normalize_rows(keys - keys.mean(axis=0))
    centroids = _seed_centroids(points, k, rng)

    assignment = np.argmax(points @ centroids.T, axis=1)
    for _ in range(iters):
        counts = np.bincount(assignment, minlength=k)
        sums = np.column_stack(
            [np.bincount(assignment, weights=points[:, j], minlength=k)
             for j in range(points.shape[1])]
        )
        nonempty = counts > 0
        centroids[nonempty] = sums[nonempty] / counts[nonempty, None]
        centroids = _normalize_rows(centroids)
        _repair_empty(points, assignment, centroids, counts)
        assignment = np.argmax(points @ centroids.T, axis=1)

    # final partition must have no empty clusters
    counts = np.bincount(assignment, minlength=k)
    _repair_empty(points, assignment, centroids, counts)
    return assignment.astype(np.int64)
