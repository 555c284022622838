"""The four training losses on relaxed codes and their subgradients.

All losses are nonnegative sums over a batch. Component values are
reported unweighted; total_loss applies the LossWeights once, so a
LossReport always satisfies
total = w_sem*j1 + alpha*j2 + beta*j3 + gamma*j4.

Nonsmooth terms use subgradients with sgn(0) = +1 (right-hand derivative),
except the quantization term exactly at b in {0, 1}, whose per-entry loss
is at its minimum there and gets subgradient 0. Gradient sums use fixed
numpy reduction order, so results are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .head import CodeBatch


@dataclass
class LossWeights:
    """Nonnegative weights for the four loss components."""

    w_sem: float = 1.0
    alpha: float = 0.01
    beta: float = 1.0
    gamma: float = 0.1

    def __post_init__(self):
        for name in ("w_sem", "alpha", "beta", "gamma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")


@dataclass
class LossReport:
    """Unweighted component values, the weighted total, and per-bit means."""

    j1: float
    j2: float
    j3: float
    j4: float
    total: float
    mu: np.ndarray = field(repr=False)


def _sgn(x: np.ndarray) -> np.ndarray:
    """Sign with the right-hand convention sgn(0) = +1."""
    return np.where(x >= 0.0, 1.0, -1.0)


def code_similarity(b_i, b_j, k: int) -> float:
    """Hashing-space similarity degree of two relaxed codes.

    Recenters both codes to 2b - 1 and maps their inner product from
    [-k, k] to [0, 1]. For binarized codes this equals
    1 - hamming_distance/k.
    """
    b_i = np.asarray(b_i, dtype=np.float64)
    b_j = np.asarray(b_j, dtype=np.float64)
    if b_i.shape != (k,) or b_j.shape != (k,):
        raise ValueError(f"codes must have length k={k}, got {b_i.shape} and {b_j.shape}")
    bt_i = 2.0 * b_i - 1.0
    bt_j = 2.0 * b_j - 1.0
    return float((bt_i @ bt_j + k) / (2.0 * k))


def _pairwise_code_similarity(b_tilde: np.ndarray, k: int) -> np.ndarray:
    return (b_tilde @ b_tilde.T + k) / (2.0 * k)


def semantic_loss(codes: CodeBatch, S: np.ndarray) -> tuple[float, np.ndarray]:
    """L1 gap between feature similarities and code similarities.

    Sums |S_ij - code_similarity_ij| over all ordered pairs of distinct
    batch items (every two images in a batch form a pair; self-pairs are
    excluded). Returns the loss and its subgradient with respect to the
    relaxed codes b.
    """
    S = np.asarray(S, dtype=np.float64)
    m, k = codes.m, codes.k
    if m < 2:
        raise ValueError(f"semantic loss needs m >= 2 rows, got {m}")
    if S.shape != (m, m):
        raise ValueError(f"similarity matrix must be ({m}, {m}), got {S.shape}")
    gap = S - _pairwise_code_similarity(codes.b_tilde, k)
    sign = _sgn(gap)
    np.fill_diagonal(gap, 0.0)
    np.fill_diagonal(sign, 0.0)
    j1 = float(np.abs(gap).sum())
    # d sim_pq / d b_tilde includes both occurrences of each row index;
    # the extra factor 2 is the chain rule through b_tilde = 2b - 1.
    grad = -(1.0 / k) * (sign + sign.T) @ codes.b_tilde
    return j1, grad


def quantization_loss(codes: CodeBatch, alpha: float) -> tuple[float, np.ndarray]:
    """Penalty pulling every relaxed-code entry toward exactly 0 or 1.

    Per entry the loss is alpha * | |2b - 1| - 1 |, zero iff b is binary.
    The subgradient is piecewise constant +-2*alpha; exactly at the
    b in {0, 1} minima it is 0, and at b = 0.5 the right-hand derivative
    -2*alpha applies.
    """
    b = codes.b
    bt = codes.b_tilde
    inner = np.abs(bt) - 1.0
    j2 = alpha * float(np.abs(inner).sum())
    # np.sign is 0 exactly at inner == 0, i.e. at b in {0, 1}
    grad = alpha * 2.0 * np.sign(inner) * _sgn(bt)
    return j2, grad


def information_loss(codes: CodeBatch, beta: float) -> tuple[float, np.ndarray, np.ndarray]:
    """Bit-balance penalty: each bit's batch mean should be 0.5.

    Returns the unweighted loss sum_j (mu_j - 0.5)^2, its gradient, and
    the per-bit means mu. beta is applied by the caller (total_loss), not
    here.
    """
    del beta  # weighting happens in total_loss
    b = codes.b
    m = b.shape[0]
    if m < 1:
        raise ValueError("information loss needs at least one row")
    mu = b.mean(axis=0)
    dev = mu - 0.5
    j3 = float((dev * dev).sum())
    grad = np.broadcast_to(2.0 * dev / m, b.shape).copy()
    return j3, grad, mu


def rotation_loss(codes: CodeBatch, rotated_codes, gamma: float):
    """Squared-Euclidean pull between each rotated code and its reference.

    rotated_codes is (R, m, k): relaxed codes of the same items under R
    feature rotations, row-aligned with the reference batch. Returns the
    unweighted loss, the gradient for the reference codes, and the
    (R, m, k) gradient for the rotated codes. gamma is applied by the
    caller.
    """
    del gamma  # weighting happens in total_loss
    rot = np.asarray(rotated_codes, dtype=np.float64)
    if rot.ndim != 3 or rot.shape[0] < 1:
        raise ValueError("rotated codes must be (R, m, k) with R >= 1; "
                         "rotation loss is inapplicable without rotation blocks")
    if rot.shape[1:] != codes.b.shape:
        raise ValueError(
            f"rotated codes misaligned: got {rot.shape[1:]}, reference batch is {codes.b.shape}"
        )
    diff = rot - codes.b[None, :, :]
    j4 = float((diff * diff).sum())
    grad_rot = 2.0 * diff
    grad_ref = -grad_rot.sum(axis=0)
    return j4, grad_ref, grad_rot


def total_loss(codes: CodeBatch, rotated_codes, S, weights: LossWeights):
    """Weighted sum of all components plus the combined gradients.

    rotated_codes may be None (first training stage), which fixes j4 = 0.
    Returns (LossReport, grad for reference codes, grad for rotated codes
    or None).
    """
    j1, g1 = semantic_loss(codes, S)
    j2, g2 = quantization_loss(codes, 1.0)
    j3, g3, mu = information_loss(codes, 1.0)
    grad = weights.w_sem * g1 + weights.alpha * g2 + weights.beta * g3
    if rotated_codes is None:
        j4 = 0.0
        grad_rot = None
    else:
        j4, g4, g4_rot = rotation_loss(codes, rotated_codes, 1.0)
        grad = grad + weights.gamma * g4
        grad_rot = weights.gamma * g4_rot
    total = weights.w_sem * j1 + weights.alpha * j2 + weights.beta * j3 + weights.gamma * j4
    report = LossReport(j1=j1, j2=j2, j3=j3, j4=j4, total=total, mu=mu)
    return report, grad, grad_rot
