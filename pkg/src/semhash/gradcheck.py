"""Central finite-difference verification of every analytic gradient.

Instances are sampled away from the nondifferentiable points of the
objective (similarity-gap zeros, relaxed codes near {0, 0.5, 1}, and
pre-activations near 0) with a margin far wider than the difference step,
so central differences are exact up to roundoff for these piecewise
linear/quadratic losses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import losses
from .head import CodeBatch, HashHeadParams, backward, forward

LOSS_NAMES = ("j1", "j2", "j3", "j4", "total", "head")

_KINK_MARGIN = 1e-3
_ZERO_FLOOR = 1e-7


@dataclass
class GradcheckReport:
    loss: str
    max_rel_error: float
    eps: float
    coords: int


def numeric_gradient(f, x: np.ndarray, eps: float) -> np.ndarray:
    """Central differences of a scalar function, one coordinate at a time."""
    x = x.astype(np.float64, copy=True)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = f(x)
        flat[i] = orig - eps
        down = f(x)
        flat[i] = orig
        grad.reshape(-1)[i] = (up - down) / (2.0 * eps)
    return grad


def relative_errors(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    """Per-coordinate |a - n| / max(|a|, |n|); coordinates where both are
    below the noise floor count as exact."""
    a = np.abs(analytic)
    n = np.abs(numeric)
    scale = np.maximum(a, n)
    err = np.abs(analytic - numeric)
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(scale < _ZERO_FLOOR, 0.0, err / scale)
    return rel


def _sample_codes(rng, m: int, k: int) -> np.ndarray:
    """Relaxed codes in (0.05, 1.45), at least _KINK_MARGIN from {0, 0.5, 1}."""
    b = rng.uniform(0.05, 1.45, size=(m, k))
    for _ in range(100):
        near = (np.abs(b) < _KINK_MARGIN) \
            | (np.abs(b - 0.5) < _KINK_MARGIN) \
            | (np.abs(b - 1.0) < _KINK_MARGIN)
        if not near.any():
            return b
        b[near] = rng.uniform(0.05, 1.45, size=int(near.sum()))
    raise RuntimeError("could not sample kink-excluded codes")


def _sample_similarity(rng, m: int) -> np.ndarray:
    a = rng.uniform(0.05, 0.95, size=(m, m))
    S = (a + a.T) / 2.0
    np.fill_diagonal(S, 1.0)
    return S


def _gap_clear(b: np.ndarray, S: np.ndarray, k: int) -> bool:
    bt = 2.0 * b - 1.0
    gap = S - (bt @ bt.T + k) / (2.0 * k)
    np.fill_diagonal(gap, np.inf)  # self-pairs are not part of the loss
    return bool(np.all(np.abs(gap) > _KINK_MARGIN))


def make_instance(loss: str, rng: np.random.Generator) -> dict:
    """One randomized kink-excluded instance for the given loss selector."""
    if loss not in LOSS_NAMES:
        raise ValueError(f"unknown loss selector {loss!r}, expected one of {LOSS_NAMES}")
    m = int(rng.integers(2, 5))
    k = int(rng.integers(2, 9))
    d = int(rng.integers(2, 9))
    inst = {"m": m, "k": k, "d": d}

    if loss in ("j1", "j2", "j3", "j4", "total"):
        for _ in range(200):
            b = _sample_codes(rng, m, k)
            S = _sample_similarity(rng, m)
            if loss not in ("j1", "total") or _gap_clear(b, S, k):
                break
        else:
            raise RuntimeError("could not sample an instance clear of similarity-gap kinks")
        inst["b"] = b
        inst["S"] = S
        if loss in ("j4", "total"):
            inst["rot"] = rng.uniform(0.05, 1.45, size=(int(rng.integers(1, 3)), m, k))
        inst["alpha"] = float(rng.uniform(0.5, 2.0))
        inst["weights"] = losses.LossWeights(
            w_sem=float(rng.uniform(0.5, 2.0)),
            alpha=float(rng.uniform(0.5, 2.0)),
            beta=float(rng.uniform(0.5, 2.0)),
            gamma=float(rng.uniform(0.5, 2.0)),
        )
        return inst

    # composed head + total objective: variables are W and c
    n_rot = int(rng.integers(1, 3))
    for _ in range(500):
        X = rng.normal(0.0, 1.0, size=(m, d))
        X_rot = rng.normal(0.0, 1.0, size=(n_rot, m, d))
        W = rng.normal(0.0, np.sqrt(2.0 / d), size=(k, d))
        c = rng.uniform(0.2, 0.8, size=k)
        params = HashHeadParams(W, c)
        blocks = [X] + [X_rot[r] for r in range(n_rot)]
        zs = [forward(params, blk).z for blk in blocks]
        bs = [np.maximum(z, 0.0) for z in zs]
        if any(np.any(np.abs(z) < _KINK_MARGIN) for z in zs):
            continue
        if any(np.any(np.abs(bb - 0.5) < _KINK_MARGIN) or np.any(np.abs(bb - 1.0) < _KINK_MARGIN)
               for bb in bs):
            continue
        S = _sample_similarity(rng, m)
        if not _gap_clear(bs[0], S, k):
            continue
        inst.update(X=X, X_rot=X_rot, params=params, S=S,
                    weights=losses.LossWeights(1.0, float(rng.uniform(0.5, 2.0)), 1.0, 1.0))
        return inst
    raise RuntimeError("could not sample a kink-excluded head instance")


def _loss_value_and_grad(loss: str, inst: dict, b: np.ndarray):
    codes = CodeBatch.from_relaxed(b)
    if loss == "j1":
        value, grad = losses.semantic_loss(codes, inst["S"])
        return value, grad, None
    if loss == "j2":
        value, grad = losses.quantization_loss(codes, inst["alpha"])
        return value, grad, None
    if loss == "j3":
        value, grad, _ = losses.information_loss(codes, 1.0)
        return value, grad, None
    raise ValueError(loss)


def check_instance(loss: str, inst: dict, eps: float = 1e-5) -> GradcheckReport:
    """Compare the analytic gradient of one instance against central differences."""
    if loss in ("j1", "j2", "j3"):
        b = inst["b"]
        _, analytic, _ = _loss_value_and_grad(loss, inst, b)
        numeric = numeric_gradient(
            lambda x: _loss_value_and_grad(loss, inst, x)[0], b, eps)
        rel = relative_errors(analytic, numeric)
    elif loss == "j4":
        b, rot = inst["b"], inst["rot"]
        _, g_ref, g_rot = losses.rotation_loss(CodeBatch.from_relaxed(b), rot, 1.0)
        analytic = np.concatenate([g_ref.ravel(), g_rot.ravel()])
        packed = np.concatenate([b.ravel(), rot.ravel()])

        def f(x):
            bb = x[: b.size].reshape(b.shape)
            rr = x[b.size:].reshape(rot.shape)
            return losses.rotation_loss(CodeBatch.from_relaxed(bb), rr, 1.0)[0]

        numeric = numeric_gradient(f, packed, eps)
        rel = relative_errors(analytic, numeric)
    elif loss == "total":
        b, rot, S, weights = inst["b"], inst["rot"], inst["S"], inst["weights"]
        _, g_ref, g_rot = losses.total_loss(CodeBatch.from_relaxed(b), rot, S, weights)
        analytic = np.concatenate([g_ref.ravel(), g_rot.ravel()])
        packed = np.concatenate([b.ravel(), rot.ravel()])

        def f(x):
            bb = x[: b.size].reshape(b.shape)
            rr = x[b.size:].reshape(rot.shape)
            return losses.total_loss(CodeBatch.from_relaxed(bb), rr, S, weights)[0].total

        numeric = numeric_gradient(f, packed, eps)
        rel = relative_errors(analytic, numeric)
    elif loss == "head":
        X, X_rot, S, weights = inst["X"], inst["X_rot"], inst["S"], inst["weights"]
        params = inst["params"]
        k, d = params.k, params.d

        def objective(packed):
            p = HashHeadParams(packed[: k * d].reshape(k, d), packed[k * d:])
            codes = forward(p, X)
            rot_b = np.stack([forward(p, X_rot[r]).b for r in range(X_rot.shape[0])])
            return losses.total_loss(codes, rot_b, S, weights)[0].total

        codes = forward(params, X)
        rot_codes = [forward(params, X_rot[r]) for r in range(X_rot.shape[0])]
        rot_b = np.stack([rc.b for rc in rot_codes])
        _, grad, grad_rot = losses.total_loss(codes, rot_b, S, weights)
        dW, dc = backward(params, X, codes, grad)
        for r, rc in enumerate(rot_codes):
            dW_r, dc_r = backward(params, X_rot[r], rc, grad_rot[r])
            dW += dW_r
            dc += dc_r
        analytic = np.concatenate([dW.ravel(), dc])
        packed = np.concatenate([params.W.ravel(), params.c])
        numeric = numeric_gradient(objective, packed, eps)
        rel = relative_errors(analytic, numeric)
    else:
        raise ValueError(f"unknown loss selector {loss!r}")

    return GradcheckReport(loss=loss, max_rel_error=float(rel.max()),
                           eps=eps, coords=int(rel.size))


def run_trials(loss: str, trials: int, seed: int = 0, eps: float = 1e-5) -> GradcheckReport:
    """Worst report over randomized instances."""
    rng = np.random.default_rng(seed)
    worst = GradcheckReport(loss=loss, max_rel_error=0.0, eps=eps, coords=0)
    for _ in range(trials):
        report = check_instance(loss, make_instance(loss, rng), eps)
        if report.max_rel_error >= worst.max_rel_error:
            worst = report
    return worst
