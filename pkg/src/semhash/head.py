"""Trainable affine hashing head mapping feature vectors to relaxed codes.

forward computes z = X W^T + c, clamps at zero (relu) into the relaxed
code b, and recenters it to b_tilde = 2b - 1. backward pushes a loss
gradient with respect to b through the clamp and the affine map, summing
over the batch (the learning rate absorbs 1/m).

Parameters persist in a "USDW" file: magic, u32 version, u32 k, u32 d,
then k*d + k little-endian float64 (row-major W, then c).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .featureio import FORMAT_VERSION, FormatError

HEAD_MAGIC = b"USDW"
_HEAD_HEADER = struct.Struct("<4sIII")


@dataclass
class HashHeadParams:
    """Affine map parameters: W is k x d, c is the k offsets."""

    W: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        self.W = np.ascontiguousarray(self.W, dtype=np.float64)
        self.c = np.ascontiguousarray(self.c, dtype=np.float64)
        if self.W.ndim != 2:
            raise ValueError(f"W must be 2-D, got shape {self.W.shape}")
        if self.c.shape != (self.W.shape[0],):
            raise ValueError(f"c must have length k={self.W.shape[0]}, got {self.c.shape}")
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.c))):
            raise ValueError("non-finite head parameters")

    @property
    def k(self) -> int:
        return self.W.shape[0]

    @property
    def d(self) -> int:
        return self.W.shape[1]

    def copy(self) -> "HashHeadParams":
        return HashHeadParams(self.W.copy(), self.c.copy())


@dataclass
class CodeBatch:
    """Relaxed codes for one batch, with pre-activations kept for backward.

    b = max(z, 0) elementwise and b_tilde = 2b - 1.
    """

    z: np.ndarray
    b: np.ndarray
    b_tilde: np.ndarray

    @classmethod
    def from_relaxed(cls, b) -> "CodeBatch":
        """Wrap already-relaxed nonnegative codes (z := b), for loss checks."""
        b = np.asarray(b, dtype=np.float64)
        if np.any(b < 0):
            raise ValueError("relaxed codes must be nonnegative")
        return cls(z=b, b=b, b_tilde=2.0 * b - 1.0)

    @property
    def m(self) -> int:
        return self.b.shape[0]

    @property
    def k(self) -> int:
        return self.b.shape[1]


def init_head(k: int, d: int, seed: int) -> HashHeadParams:
    """Seeded init: W ~ N(0, 2/d), offsets at 0.5.

    Offsets start at the binarization threshold so untrained codes sit
    symmetrically for the balance loss.
    """
    if k < 1 or d < 1:
        raise ValueError(f"k and d must be >= 1, got k={k}, d={d}")
    rng = np.random.default_rng(seed)
    W = rng.normal(0.0, np.sqrt(2.0 / d), size=(k, d))
    c = np.full(k, 0.5)
    return HashHeadParams(W, c)


def forward(params: HashHeadParams, batch) -> CodeBatch:
    """Compute pre-activations, relaxed codes and recentered codes for a batch."""
    X = np.asarray(batch, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.d:
        raise ValueError(f"batch must be (m, {params.d}), got shape {X.shape}")
    z = X @ params.W.T + params.c
    b = np.maximum(z, 0.0)
    return CodeBatch(z=z, b=b, b_tilde=2.0 * b - 1.0)


def backward(params: HashHeadParams, batch, codes: CodeBatch, dL_db) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the loss with respect to W and c, summed over the batch.

    The clamp passes gradient only where z > 0 (subderivative 0 at z = 0).
    codes must be the CodeBatch retained from forward on the same batch.
    """
    X = np.asarray(batch, dtype=np.float64)
    dL_db = np.asarray(dL_db, dtype=np.float64)
    if codes is None or codes.z is None:
        raise ValueError("missing retained activations: pass the CodeBatch from forward")
    m = X.shape[0]
    if X.shape != (m, params.d) or codes.z.shape != (m, params.k) or dL_db.shape != (m, params.k):
        raise ValueError(
            f"shape mismatch: batch {X.shape}, z {codes.z.shape}, dL_db {dL_db.shape}"
        )
    if not np.all(np.isfinite(dL_db)):
        raise ValueError("non-finite loss gradient")
    dz = dL_db * (codes.z > 0.0)
    dW = dz.T @ X
    dc = dz.sum(axis=0)
    return dW, dc


def save_head(params: HashHeadParams, path) -> None:
    """Persist head parameters in the USDW layout."""
    header = _HEAD_HEADER.pack(HEAD_MAGIC, FORMAT_VERSION, params.k, params.d)
    with open(path, "wb") as f:
        f.write(header)
        f.write(params.W.astype("<f8", copy=False).tobytes())
        f.write(params.c.astype("<f8", copy=False).tobytes())


def load_head(path) -> HashHeadParams:
    """Load head parameters from a USDW file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such head-parameter file: {path}")
    raw = path.read_bytes()
    if len(raw) < _HEAD_HEADER.size:
        raise FormatError(f"truncated header: {len(raw)} bytes, need {_HEAD_HEADER.size}")
    magic, version, k, d = _HEAD_HEADER.unpack_from(raw)
    if magic != HEAD_MAGIC:
        raise FormatError(f"bad magic {magic!r} at offset 0, expected {HEAD_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported version {version} at offset 4")
    expected = _HEAD_HEADER.size + (k * d + k) * 8
    if len(raw) != expected:
        raise FormatError(f"truncated payload: file is {len(raw)} bytes, header declares {expected}")
    W = np.frombuffer(raw, dtype="<f8", count=k * d, offset=_HEAD_HEADER.size).reshape(k, d).copy()
    c = np.frombuffer(raw, dtype="<f8", count=k, offset=_HEAD_HEADER.size + k * d * 8).copy()
    return HashHeadParams(W, c)
