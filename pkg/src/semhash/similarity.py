"""Feature-space similarity degrees that supervise code learning.

The similarity of two feature vectors is exp(-||x_i - x_j||_2 / (rho * d)),
a value in (0, 1] that reaches 1 exactly when the vectors coincide. A batch
of m rows yields an m x m symmetric matrix with unit diagonal.
"""

from __future__ import annotations

import numpy as np


def pair_similarity(x_i, x_j, rho: float, d: int | None = None) -> float:
    """Similarity degree of two feature vectors.

    rho is a positive scale constant; d defaults to the vector dimension.
    Computed in float64 even for float32 inputs: exp of small distance
    differences is sensitive near 1.
    """
    x_i = np.asarray(x_i, dtype=np.float64)
    x_j = np.asarray(x_j, dtype=np.float64)
    if x_i.ndim != 1 or x_i.shape != x_j.shape:
        raise ValueError(f"dimension mismatch: {x_i.shape} vs {x_j.shape}")
    if not (np.all(np.isfinite(x_i)) and np.all(np.isfinite(x_j))):
        raise ValueError("non-finite feature input")
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    if d is None:
        d = x_i.shape[0]
    return float(np.exp(-np.linalg.norm(x_i - x_j) / (rho * d)))


def batch_similarity(batch, rho: float) -> np.ndarray:
    """Pairwise similarity matrix of a feature batch.

    Returns an m x m float64 array: symmetric, unit diagonal, entries in
    (0, 1]. Each entry equals pair_similarity on the corresponding rows.
    """
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2:
        raise ValueError(f"batch must be 2-D, got shape {batch.shape}")
    m, d = batch.shape
    if m < 2:
        raise ValueError(f"batch similarity needs m >= 2 rows, got {m}")
    if not np.all(np.isfinite(batch)):
        raise ValueError("non-finite feature input")
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    # row-at-a-time keeps memory O(m*d) and matches pair_similarity bitwise:
    # (x_j - x_i)**2 == (x_i - x_j)**2, so the matrix is exactly symmetric
    dist = np.empty((m, m))
    for i in range(m):
        diff = batch - batch[i]
        dist[i] = np.sqrt(np.einsum("jk,jk->j", diff, diff))
    return np.exp(-dist / (rho * d))
