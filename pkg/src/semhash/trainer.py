"""Two-stage batch gradient descent over the hashing head.

Stage 1 minimizes the weighted semantic + quantization + balance losses
on the reference feature block. Stage 2 continues from the stage-1
parameters and adds the rotation loss, forwarding every rotation block
through the current head each step. Updates use classical momentum on
batch-sum gradients; everything is deterministic given the config seed.

Optimization runs in standardized input coordinates (column means of the
reference block removed, scaled by INPUT_SCALE times the global feature
deviation) while similarity targets are always computed on the raw
features. Standardizing is a pure preconditioner: it shrinks the initial
pre-activation spread so codes start near the binarization threshold,
which keeps bits alive and balanced. The returned parameters are folded
back to an equivalent affine map on raw features, so encoding works on
features as stored.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .featureio import FeatureSet
from .hamming import binarize, build_index, evaluate_map
from .head import HashHeadParams, backward, forward, init_head
from .losses import LossReport, LossWeights, total_loss
from .similarity import batch_similarity
from .synth import holdout_split

DIVERGENCE_FACTOR = 1e6

# input-standardization denominator: global feature std times this factor
INPUT_SCALE = 4.0


class TrainingError(Exception):
    """Training aborted: divergence, non-finite loss, or an unusable config."""


@dataclass
class TrainConfig:
    k: int = 32
    rho: float = 0.125
    weights: LossWeights = field(default_factory=LossWeights)
    lr: float = 1e-4
    momentum: float = 0.9
    epochs_stage1: int = 1200
    epochs_stage2: int = 0
    batch_size: int = 128
    seed: int = 42
    rotation_angles: tuple = ()

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.rho <= 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.epochs_stage1 < 0 or self.epochs_stage2 < 0:
            raise ValueError("epoch counts must be >= 0")
        if self.batch_size < 2:
            raise ValueError(f"batch_size must be >= 2, got {self.batch_size}")


@dataclass
class TrainTrace:
    reports: list
    epoch_seconds: list
    params: HashHeadParams


def make_batches(fs: FeatureSet, m: int, seed: int, epoch: int) -> list[np.ndarray]:
    """Index batches for one epoch: a seeded shuffle chunked into size-m
    batches, with a trailing remainder kept only if it holds >= 2 items."""
    if fs.n < m:
        raise ValueError(f"batch size {m} exceeds dataset size {fs.n}")
    perm = np.random.default_rng([seed, epoch]).permutation(fs.n)
    batches = [perm[i:i + m] for i in range(0, fs.n, m)]
    if len(batches[-1]) < 2:
        batches.pop()
    return batches


def format_log_line(epoch: int, report: LossReport) -> str:
    return (f"epoch={epoch} j1={report.j1:.6g} j2={report.j2:.6g} "
            f"j3={report.j3:.6g} j4={report.j4:.6g} total={report.total:.6g}")


def train(fs: FeatureSet, cfg: TrainConfig, log=None) -> TrainTrace:
    """Run both training stages and return the per-epoch trace.

    log, if given, receives one formatted line per epoch. Requesting
    stage 2 (epochs_stage2 > 0) on a feature set without rotation blocks
    is an error, not a silent skip.
    """
    if cfg.epochs_stage2 > 0 and fs.rotations == 0:
        raise TrainingError(
            "stage 2 requested but the feature set has no rotation blocks (R=0)")

    init = init_head(cfg.k, fs.d, cfg.seed)
    total_epochs = cfg.epochs_stage1 + cfg.epochs_stage2
    if total_epochs == 0:
        return TrainTrace(reports=[], epoch_seconds=[], params=init)
    if fs.n < cfg.batch_size:
        raise TrainingError(f"dataset has {fs.n} rows, batch size is {cfg.batch_size}")

    raw = [fs.block(r).astype(np.float64) for r in range(fs.rotations + 1)]
    mean = raw[0].mean(axis=0)
    spread = raw[0].std()
    scale = INPUT_SCALE * (spread if spread > 0 else 1.0)
    blocks = [(blk - mean) / scale for blk in raw]
    # the seeded init applies directly to standardized inputs (its scale
    # presumes unit-variance features), putting initial codes near the
    # binarization threshold
    params = init
    vW = np.zeros_like(params.W)
    vc = np.zeros_like(params.c)

    reports: list[LossReport] = []
    epoch_seconds: list[float] = []
    initial_total = None

    for epoch in range(total_epochs):
        started = time.perf_counter()
        stage2 = epoch >= cfg.epochs_stage1
        sums = np.zeros(5)  # j1..j4, total
        mu_acc = np.zeros(cfg.k)
        rows = 0

        for idx in make_batches(fs, cfg.batch_size, cfg.seed, epoch):
            S = batch_similarity(raw[0][idx], cfg.rho)
            X = blocks[0][idx]
            codes = forward(params, X)
            rot_codes = None
            rot_b = None
            if stage2:
                rot_codes = [forward(params, blocks[r][idx])
                             for r in range(1, fs.rotations + 1)]
                rot_b = np.stack([rc.b for rc in rot_codes])
            report, grad, grad_rot = total_loss(codes, rot_b, S, cfg.weights)

            for term, value in (("j1", report.j1), ("j2", report.j2),
                                ("j3", report.j3), ("j4", report.j4)):
                if not np.isfinite(value):
                    raise TrainingError(f"non-finite {term} at epoch {epoch}")

            dW, dc = backward(params, X, codes, grad)
            if stage2:
                for r, rc in enumerate(rot_codes):
                    dW_r, dc_r = backward(params, blocks[r + 1][idx], rc, grad_rot[r])
                    dW += dW_r
                    dc += dc_r
            vW = cfg.momentum * vW - cfg.lr * dW
            vc = cfg.momentum * vc - cfg.lr * dc
            params = HashHeadParams(params.W + vW, params.c + vc)

            sums += (report.j1, report.j2, report.j3, report.j4, report.total)
            mu_acc += report.mu * len(idx)
            rows += len(idx)

        epoch_report = LossReport(j1=sums[0], j2=sums[1], j3=sums[2], j4=sums[3],
                                  total=sums[4], mu=mu_acc / rows)
        if initial_total is None:
            initial_total = epoch_report.total
        elif initial_total > 0 and epoch_report.total > DIVERGENCE_FACTOR * initial_total:
            raise TrainingError(
                f"diverged at epoch {epoch}: total {epoch_report.total:.3g} exceeds "
                f"{DIVERGENCE_FACTOR:g} x initial {initial_total:.3g}")
        reports.append(epoch_report)
        epoch_seconds.append(time.perf_counter() - started)
        if log is not None:
            log(format_log_line(epoch, epoch_report))

    # fold the standardization back into an equivalent raw-feature map
    final = HashHeadParams(params.W / scale, params.c - params.W @ (mean / scale))
    return TrainTrace(reports=reports, epoch_seconds=epoch_seconds, params=final)


def encode_block(params: HashHeadParams, fs: FeatureSet, block: int = 0):
    """Binarize one feature block into a codebook; ids are row indices."""
    bits = binarize(forward(params, fs.block(block)).b)
    return build_index(bits, np.arange(fs.n, dtype=np.uint64))


def rho_sweep(fs: FeatureSet, cfg: TrainConfig, rho_list,
              n_queries: int = 60, eval_k: int = 100, log=None):
    """Train one head per rho on a shared held-out split and report MAP.

    Returns a list of (rho, map_at_k) rows; the same database/query split
    (seeded from the config) is reused for every rho.
    """
    rho_list = list(rho_list)
    if not rho_list:
        raise ValueError("rho_list must be nonempty")
    if fs.labels is None:
        raise ValueError("rho sweep needs labels for MAP evaluation")
    db_fs, query_fs = holdout_split(fs, n_queries, cfg.seed)
    rows = []
    for rho in rho_list:
        trace = train(db_fs, replace(cfg, rho=float(rho)), log=log)
        index = encode_block(trace.params, db_fs)
        query_bits = binarize(forward(trace.params, query_fs.block(0)).b)
        report = evaluate_map(index, query_bits, query_fs.labels, db_fs.labels, eval_k)
        rows.append((float(rho), report.map_at_k))
    return rows


def format_sweep_table(rows, eval_k: int) -> str:
    lines = [f"{'rho':>10}  map_at_{eval_k}"]
    for rho, value in rows:
        lines.append(f"{rho:>10.6g}  {value:.6f}")
    return "\n".join(lines)
