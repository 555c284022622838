"""Binarization, bit-packed Hamming search, and retrieval metrics.

Relaxed codes binarize at 0.5 (inclusive on the high side). Codes are
stored packed LSB-first per the codebook format; queries scan the packed
array with a bytewise XOR + popcount and break distance ties by ascending
id, so results are machine-reproducible. A naive unpacked scan is kept
as the reference the packed path is checked against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .featureio import BinaryCodebook, FeatureSet

# popcount of every byte value
_POPCOUNT = np.unpackbits(np.arange(256, dtype=np.uint8)[:, None], axis=1).sum(axis=1)
_POPCOUNT = _POPCOUNT.astype(np.uint16)


@dataclass
class EvalReport:
    """MAP over a query set plus the per-query average precisions."""

    map_at_k: float
    aps: np.ndarray
    query_ids: np.ndarray
    k: int


def binarize(code) -> np.ndarray:
    """Threshold relaxed codes at 0.5: bit = 1 iff value >= 0.5.

    Accepts a single code or a batch; returns uint8 bits of the same shape.
    """
    arr = np.asarray(code, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite entry in relaxed code")
    return (arr >= 0.5).astype(np.uint8)


def pack_codes(bits) -> np.ndarray:
    """Pack rows of {0,1} bits LSB-first into bytes."""
    bits = np.asarray(bits, dtype=np.uint8)
    return np.packbits(bits, axis=-1, bitorder="little")


def unpack_codes(codes, k: int) -> np.ndarray:
    """Inverse of pack_codes, recovering k bits per row."""
    return np.unpackbits(np.asarray(codes, dtype=np.uint8), axis=-1,
                         count=k, bitorder="little")


def build_index(bits, ids) -> BinaryCodebook:
    """Pack n uniform-length bit rows into a queryable codebook."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.ndim != 2:
        raise ValueError(f"codes must be (n, k), got shape {bits.shape}")
    return BinaryCodebook(k=bits.shape[1], codes=pack_codes(bits), ids=ids)


def hamming_distances(index: BinaryCodebook, query_bits) -> np.ndarray:
    """Hamming distance from one query to every stored code."""
    q = np.asarray(query_bits, dtype=np.uint8)
    if q.shape != (index.k,):
        raise ValueError(f"query must have k={index.k} bits, got shape {q.shape}")
    q_packed = pack_codes(q[None, :])[0]
    return _POPCOUNT[index.codes ^ q_packed].sum(axis=1).astype(np.int64)


def query(index: BinaryCodebook, query_bits, K: int) -> list[tuple[int, int]]:
    """Exact top-K by Hamming distance, ties broken by ascending id.

    Returns at most K (id, distance) pairs with nondecreasing distance.
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    dists = hamming_distances(index, query_bits)
    order = np.lexsort((index.ids, dists))[: min(K, index.n)]
    return [(int(index.ids[i]), int(dists[i])) for i in order]


def naive_query(bits_db, ids, query_bits, K: int) -> list[tuple[int, int]]:
    """Reference scan on unpacked bits; the packed path must match it."""
    bits_db = np.asarray(bits_db, dtype=np.uint8)
    q = np.asarray(query_bits, dtype=np.uint8)
    dists = (bits_db != q[None, :]).sum(axis=1).astype(np.int64)
    ids = np.asarray(ids, dtype=np.uint64)
    order = np.lexsort((ids, dists))[: min(K, bits_db.shape[0])]
    return [(int(ids[i]), int(dists[i])) for i in order]


def evaluate_map(index: BinaryCodebook, query_bits, query_labels,
                 db_labels, K: int, query_ids=None) -> EvalReport:
    """MAP@K with same-label relevance.

    db_labels aligns positionally with the codebook's ids. Per query,
    AP is the mean of precision-at-rank over the relevant hits inside the
    top-K list; a query retrieving no relevant item contributes AP = 0
    and still counts toward the mean. query_ids (default: row numbers)
    only label the per-query report rows.
    """
    query_bits = np.atleast_2d(np.asarray(query_bits, dtype=np.uint8))
    query_labels = np.asarray(query_labels)
    db_labels = np.asarray(db_labels)
    if query_bits.shape[0] == 0:
        raise ValueError("empty query set")
    if query_labels.shape != (query_bits.shape[0],):
        raise ValueError("one label per query required")
    if db_labels.shape != (index.n,):
        raise ValueError(f"db_labels must align with the index ({index.n} items)")
    if query_ids is None:
        query_ids = np.arange(query_bits.shape[0], dtype=np.uint64)
    query_ids = np.asarray(query_ids, dtype=np.uint64)
    label_of = dict(zip((int(i) for i in index.ids), db_labels))

    aps = np.zeros(query_bits.shape[0])
    for qi in range(query_bits.shape[0]):
        ranked = query(index, query_bits[qi], K)
        hits = 0
        precision_sum = 0.0
        for rank, (item_id, _) in enumerate(ranked, start=1):
            if label_of[item_id] == query_labels[qi]:
                hits += 1
                precision_sum += hits / rank
        aps[qi] = precision_sum / hits if hits else 0.0
    return EvalReport(map_at_k=float(aps.mean()), aps=aps,
                      query_ids=query_ids, k=K)


def lsh_baseline(fs: FeatureSet, k: int, seed: int) -> BinaryCodebook:
    """Random-hyperplane codes over mean-centered features, as a sanity control.

    Bit j of item i is the sign (>= 0) of the projection of the centered
    feature row onto the j-th seeded Gaussian direction. ids are row
    indices.
    """
    rng = np.random.default_rng(seed)
    X = fs.block(0).astype(np.float64)
    centered = X - X.mean(axis=0, keepdims=True)
    planes = rng.normal(size=(k, fs.d))
    bits = (centered @ planes.T >= 0.0).astype(np.uint8)
    return build_index(bits, np.arange(fs.n, dtype=np.uint64))
