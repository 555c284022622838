"""Binary feature-file and code-file I/O.

Two fixed-layout little-endian formats decouple the pipeline from any
feature-extraction ecosystem:

USDF (feature sets):
  magic "USDF" | u32 version=1 | u32 n | u32 d | u32 R | u8 has_labels
  then (R+1) contiguous blocks of n*d float32 (block 0 = reference
  features, blocks 1..R = rotated variants, row-aligned with block 0),
  then n u32 labels iff has_labels=1.

USDB (binary codebooks):
  magic "USDB" | u32 version=1 | u32 n | u32 k
  then n records of (u64 id, ceil(k/8) code bytes).
  Bit j of a code lives in byte j//8 at bit position j%8 (LSB-first);
  pad bits beyond k are zero.

An optional plain-text sidecar manifest ("<path>.manifest", key=value
lines) records rotation angles and provenance.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

FEATURE_MAGIC = b"USDF"
CODEBOOK_MAGIC = b"USDB"
FORMAT_VERSION = 1

_FEATURE_HEADER = struct.Struct("<4sIIIIB")
_CODEBOOK_HEADER = struct.Struct("<4sIII")


class FormatError(Exception):
    """A file violates the USDF/USDB layout or a payload invariant."""


def code_bytes(k: int) -> int:
    """Bytes needed for one k-bit packed code."""
    return (k + 7) // 8


def _pad_mask(k: int) -> int:
    """Byte mask selecting the pad bits of the last code byte (0 if none)."""
    used = k % 8
    return 0 if used == 0 else (0xFF << used) & 0xFF


@dataclass
class FeatureSet:
    """n feature rows of dimension d, plus R aligned rotated-variant blocks.

    data has shape (R+1, n, d) float32; block 0 holds the reference
    features and row i refers to the same item in every block. labels,
    when present, is an n-vector of integer class ids.
    """

    data: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 3:
            raise ValueError(f"data must be (R+1, n, d), got shape {self.data.shape}")
        if self.data.shape[2] < 1:
            raise ValueError("feature dimension d must be >= 1")
        if not np.all(np.isfinite(self.data)):
            block, row, col = np.argwhere(~np.isfinite(self.data))[0]
            raise ValueError(f"non-finite value at block {block}, row {row}, col {col}")
        if self.labels is not None:
            self.labels = np.ascontiguousarray(self.labels, dtype=np.uint32)
            if self.labels.shape != (self.n,):
                raise ValueError(f"labels must have length n={self.n}, got {self.labels.shape}")

    @property
    def n(self) -> int:
        return self.data.shape[1]

    @property
    def d(self) -> int:
        return self.data.shape[2]

    @property
    def rotations(self) -> int:
        return self.data.shape[0] - 1

    def block(self, index: int) -> np.ndarray:
        """One n x d block; 0 is the reference block."""
        return self.data[index]

    def take(self, indices) -> "FeatureSet":
        """Row subset, preserving block alignment and labels."""
        indices = np.asarray(indices, dtype=np.int64)
        labels = None if self.labels is None else self.labels[indices]
        return FeatureSet(self.data[:, indices, :], labels)


@dataclass
class BinaryCodebook:
    """n bit-packed k-bit codes with unique item ids.

    codes has shape (n, ceil(k/8)) uint8, LSB-first within each byte;
    pad bits are zero.
    """

    k: int
    codes: np.ndarray
    ids: np.ndarray

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("code length k must be >= 1")
        self.codes = np.ascontiguousarray(self.codes, dtype=np.uint8)
        self.ids = np.ascontiguousarray(self.ids, dtype=np.uint64)
        if self.codes.ndim != 2 or self.codes.shape[1] != code_bytes(self.k):
            raise ValueError(
                f"codes must be (n, {code_bytes(self.k)}) for k={self.k}, got {self.codes.shape}"
            )
        if self.ids.shape != (self.n,):
            raise ValueError(f"ids must have length n={self.n}, got {self.ids.shape}")
        if len(np.unique(self.ids)) != self.n:
            raise ValueError("ids must be unique")
        mask = _pad_mask(self.k)
        if mask and np.any(self.codes[:, -1] & mask):
            bad = int(np.nonzero(self.codes[:, -1] & mask)[0][0])
            raise ValueError(f"nonzero pad bits in code {bad}")

    @property
    def n(self) -> int:
        return self.codes.shape[0]


def write_features(fs: FeatureSet, path) -> None:
    """Write a validated FeatureSet; read_features(path) reproduces it bit-exactly."""
    has_labels = fs.labels is not None
    header = _FEATURE_HEADER.pack(
        FEATURE_MAGIC, FORMAT_VERSION, fs.n, fs.d, fs.rotations, int(has_labels)
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(fs.data.astype("<f4", copy=False).tobytes())
        if has_labels:
            f.write(fs.labels.astype("<u4", copy=False).tobytes())


def read_features(path) -> FeatureSet:
    """Read and validate a USDF file, reporting byte offsets on failure."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such feature file: {path}")
    raw = path.read_bytes()
    if len(raw) < _FEATURE_HEADER.size:
        raise FormatError(f"truncated header: {len(raw)} bytes, need {_FEATURE_HEADER.size}")
    magic, version, n, d, rotations, has_labels = _FEATURE_HEADER.unpack_from(raw)
    if magic != FEATURE_MAGIC:
        raise FormatError(f"bad magic {magic!r} at offset 0, expected {FEATURE_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported version {version} at offset 4")
    if d < 1:
        raise FormatError(f"feature dimension {d} at offset 12 must be >= 1")
    if has_labels not in (0, 1):
        raise FormatError(f"has_labels byte must be 0 or 1, got {has_labels} at offset 20")

    payload = (rotations + 1) * n * d * 4
    label_bytes = n * 4 if has_labels else 0
    expected = _FEATURE_HEADER.size + payload + label_bytes
    if len(raw) != expected:
        raise FormatError(
            f"truncated payload: file is {len(raw)} bytes, header at offset 0 "
            f"declares {expected} (n={n}, d={d}, R={rotations}, labels={bool(has_labels)})"
        )

    flat = np.frombuffer(raw, dtype="<f4", count=(rotations + 1) * n * d,
                         offset=_FEATURE_HEADER.size)
    data = flat.reshape(rotations + 1, n, d).copy()
    if not np.all(np.isfinite(data)):
        block, row, col = (int(v) for v in np.argwhere(~np.isfinite(data))[0])
        offset = _FEATURE_HEADER.size + ((block * n + row) * d + col) * 4
        raise FormatError(
            f"non-finite value at block {block}, row {row}, col {col} (byte offset {offset})"
        )
    labels = None
    if has_labels:
        labels = np.frombuffer(raw, dtype="<u4", count=n,
                               offset=_FEATURE_HEADER.size + payload).copy()
    return FeatureSet(data, labels)


def write_codebook(cb: BinaryCodebook, path) -> None:
    """Write a validated BinaryCodebook; pad bits are zero by invariant."""
    header = _CODEBOOK_HEADER.pack(CODEBOOK_MAGIC, FORMAT_VERSION, cb.n, cb.k)
    record = np.dtype([("id", "<u8"), ("code", "u1", (cb.codes.shape[1],))])
    records = np.empty(cb.n, dtype=record)
    records["id"] = cb.ids
    records["code"] = cb.codes
    with open(path, "wb") as f:
        f.write(header)
        f.write(records.tobytes())


def read_codebook(path) -> BinaryCodebook:
    """Read and validate a USDB file; nonzero pad bits are rejected."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such codebook file: {path}")
    raw = path.read_bytes()
    if len(raw) < _CODEBOOK_HEADER.size:
        raise FormatError(f"truncated header: {len(raw)} bytes, need {_CODEBOOK_HEADER.size}")
    magic, version, n, k = _CODEBOOK_HEADER.unpack_from(raw)
    if magic != CODEBOOK_MAGIC:
        raise FormatError(f"bad magic {magic!r} at offset 0, expected {CODEBOOK_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported version {version} at offset 4")
    if k < 1:
        raise FormatError(f"code length {k} at offset 12 must be >= 1")

    nbytes = code_bytes(k)
    expected = _CODEBOOK_HEADER.size + n * (8 + nbytes)
    if len(raw) != expected:
        raise FormatError(
            f"truncated payload: file is {len(raw)} bytes, header declares {expected} "
            f"(n={n}, k={k})"
        )
    record = np.dtype([("id", "<u8"), ("code", "u1", (nbytes,))])
    records = np.frombuffer(raw, dtype=record, count=n, offset=_CODEBOOK_HEADER.size)
    ids = records["id"].copy()
    codes = records["code"].reshape(n, nbytes).copy()

    mask = _pad_mask(k)
    if mask and np.any(codes[:, -1] & mask):
        bad = int(np.nonzero(codes[:, -1] & mask)[0][0])
        offset = _CODEBOOK_HEADER.size + bad * (8 + nbytes) + 8 + nbytes - 1
        raise FormatError(f"nonzero pad bits in record {bad} (byte offset {offset})")
    if len(np.unique(ids)) != n:
        raise FormatError("duplicate ids in codebook")
    return BinaryCodebook(k, codes, ids)


def manifest_path(path) -> Path:
    return Path(str(path) + ".manifest")


def write_manifest(path, entries: dict) -> None:
    """Write the sidecar manifest as sorted key=value lines."""
    lines = [f"{key}={entries[key]}" for key in sorted(entries)]
    manifest_path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path) -> dict:
    """Read the sidecar manifest if present; absence yields an empty dict."""
    mpath = manifest_path(path)
    if not mpath.exists():
        return {}
    entries = {}
    for line in mpath.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        entries[key.strip()] = value.strip()
    return entries
