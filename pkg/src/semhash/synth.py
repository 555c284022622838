"""Synthetic labeled feature sets for desk-scale benchmarks.

make_clusters draws a Gaussian mixture whose cluster means sit on a
seeded orthonormal frame, scaled so every pair of means is exactly
separation * std apart (std is the per-coordinate within-cluster
deviation). augment_with_orthogonal adds one rotated-variant block
produced by a seeded orthogonal transform, standing in for image
rotation at the feature level.
"""

from __future__ import annotations

import numpy as np

from .featureio import FeatureSet


def make_clusters(n: int, d: int, clusters: int, separation: float = 6.0,
                  std: float = 1.0, seed: int = 42) -> FeatureSet:
    """Deterministic labeled Gaussian-mixture feature set."""
    if clusters < 1:
        raise ValueError(f"clusters must be >= 1, got {clusters}")
    if n < clusters:
        raise ValueError(f"need at least one point per cluster: n={n}, clusters={clusters}")
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    if std <= 0 or separation < 0:
        raise ValueError("std must be positive and separation nonnegative")

    if clusters > d:
        raise ValueError(f"need clusters <= d for equidistant means, got {clusters} > {d}")
    rng = np.random.default_rng(seed)
    if clusters > 1:
        # orthonormal directions are pairwise sqrt(2) apart, so every pair
        # of cluster means sits at exactly separation * std
        frame, _ = np.linalg.qr(rng.normal(size=(d, clusters)))
        means = frame.T * (separation * std / np.sqrt(2.0))
    else:
        means = np.zeros((1, d))

    labels = np.arange(n, dtype=np.uint32) % clusters
    labels.sort()
    data = means[labels] + rng.normal(0.0, std, size=(n, d))
    return FeatureSet(data[None, :, :].astype(np.float32), labels)


def augment_with_orthogonal(fs: FeatureSet, seed: int) -> FeatureSet:
    """Append one block of features mapped through a seeded orthogonal matrix."""
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.normal(size=(fs.d, fs.d)))
    rotated = (fs.block(0).astype(np.float64) @ Q.T).astype(np.float32)
    data = np.concatenate([fs.data, rotated[None, :, :]], axis=0)
    return FeatureSet(data, fs.labels)


def holdout_indices(n: int, n_queries: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded (database, query) row indices, each sorted ascending."""
    if not 0 < n_queries < n:
        raise ValueError(f"n_queries must be in (0, {n}), got {n_queries}")
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[n_queries:]), np.sort(perm[:n_queries])


def holdout_split(fs: FeatureSet, n_queries: int, seed: int) -> tuple[FeatureSet, FeatureSet]:
    """Seeded split into (database, queries), preserving row order within each part."""
    db_idx, query_idx = holdout_indices(fs.n, n_queries, seed)
    return fs.take(db_idx), fs.take(query_idx)
