import numpy as np
import pytest

from semhash.featureio import FormatError
from semhash.head import (CodeBatch, HashHeadParams, backward, forward,
                          init_head, load_head, save_head)


def test_init_is_deterministic():
    a = init_head(16, 32, seed=5)
    b = init_head(16, 32, seed=5)
    assert np.array_equal(a.W, b.W) and np.array_equal(a.c, b.c)
    c = init_head(16, 32, seed=6)
    assert not np.array_equal(a.W, c.W)


def test_init_offsets_put_zero_input_at_threshold():
    params = init_head(8, 4, seed=0)
    codes = forward(params, np.zeros((3, 4)))
    assert np.array_equal(codes.b, np.full((3, 8), 0.5))


def test_init_weight_scale():
    params = init_head(32, 64, seed=7)
    target = np.sqrt(2.0 / 64)
    assert 0.8 * target <= params.W.std() <= 1.2 * target
    assert np.array_equal(params.c, np.full(32, 0.5))


def test_init_rejects_bad_sizes():
    with pytest.raises(ValueError):
        init_head(0, 4, seed=1)
    with pytest.raises(ValueError):
        init_head(4, 0, seed=1)


def test_forward_constant_head():
    params = HashHeadParams(np.zeros((3, 2)), np.ones(3))
    codes = forward(params, np.array([[5.0, -9.0], [0.0, 0.0]]))
    assert np.array_equal(codes.b, np.ones((2, 3)))
    assert np.array_equal(codes.b_tilde, np.ones((2, 3)))


def test_forward_clamp_definition():
    params = HashHeadParams(np.eye(2), np.zeros(2))
    codes = forward(params, np.array([[-3.0, 2.0]]))
    assert np.array_equal(codes.b, [[0.0, 2.0]])
    assert np.array_equal(codes.b_tilde, [[-1.0, 3.0]])
    assert np.array_equal(codes.z, [[-3.0, 2.0]])


def test_forward_matches_naive_matmul():
    rng = np.random.default_rng(11)
    params = HashHeadParams(rng.normal(size=(4, 6)), rng.normal(size=4))
    X = rng.normal(size=(5, 6))
    codes = forward(params, X)
    for i in range(5):
        for j in range(4):
            z = sum(X[i, l] * params.W[j, l] for l in range(6)) + params.c[j]
            assert codes.z[i, j] == pytest.approx(z, rel=1e-6)
            assert codes.b[i, j] == pytest.approx(max(z, 0.0), rel=1e-6, abs=1e-12)


def test_forward_is_deterministic_and_nonnegative():
    rng = np.random.default_rng(12)
    params = HashHeadParams(rng.normal(size=(8, 3)), rng.normal(size=8))
    X = rng.normal(size=(10, 3))
    a = forward(params, X)
    b = forward(params, X)
    assert np.array_equal(a.z, b.z) and np.array_equal(a.b, b.b)
    assert np.all(a.b >= 0) and np.all(a.b_tilde >= -1)


def test_forward_shape_check():
    params = init_head(4, 5, seed=0)
    with pytest.raises(ValueError, match="batch"):
        forward(params, np.zeros((2, 3)))


def test_backward_zero_upstream_gives_zero():
    rng = np.random.default_rng(13)
    params = HashHeadParams(rng.normal(size=(4, 3)), rng.normal(size=4))
    X = rng.normal(size=(6, 3))
    codes = forward(params, X)
    dW, dc = backward(params, X, codes, np.zeros((6, 4)))
    assert not dW.any() and not dc.any()


def test_backward_dead_units_give_zero():
    params = HashHeadParams(np.zeros((3, 2)), np.full(3, -1.0))  # all z = -1 < 0
    X = np.ones((4, 2))
    codes = forward(params, X)
    dW, dc = backward(params, X, codes, np.ones((4, 3)))
    assert not dW.any() and not dc.any()


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(14)
    m, d, k = 3, 5, 4
    X = rng.normal(size=(m, d))
    G = rng.normal(size=(m, k))  # fixed linear functional of b
    params = HashHeadParams(rng.normal(size=(k, d)), rng.uniform(0.3, 0.7, size=k))
    codes = forward(params, X)
    assert np.abs(codes.z).min() > 1e-3  # kink exclusion

    dW, dc = backward(params, X, codes, G)
    eps = 1e-6

    def loss(W, c):
        return float((np.maximum(X @ W.T + c, 0.0) * G).sum())

    for j in range(k):
        for l in range(d):
            W_up, W_dn = params.W.copy(), params.W.copy()
            W_up[j, l] += eps
            W_dn[j, l] -= eps
            num = (loss(W_up, params.c) - loss(W_dn, params.c)) / (2 * eps)
            assert dW[j, l] == pytest.approx(num, rel=1e-4, abs=1e-7)
        c_up, c_dn = params.c.copy(), params.c.copy()
        c_up[j] += eps
        c_dn[j] -= eps
        num = (loss(params.W, c_up) - loss(params.W, c_dn)) / (2 * eps)
        assert dc[j] == pytest.approx(num, rel=1e-4, abs=1e-7)


def test_backward_requires_retained_codes():
    params = init_head(2, 2, seed=0)
    X = np.zeros((1, 2))
    with pytest.raises(ValueError, match="retained"):
        backward(params, X, None, np.zeros((1, 2)))
    codes = forward(params, X)
    with pytest.raises(ValueError, match="shape"):
        backward(params, X, codes, np.zeros((2, 2)))


def test_code_batch_from_relaxed_rejects_negative():
    with pytest.raises(ValueError, match="nonnegative"):
        CodeBatch.from_relaxed(np.array([[-0.1, 0.5]]))


def test_head_file_round_trip(tmp_path):
    rng = np.random.default_rng(15)
    params = HashHeadParams(rng.normal(size=(5, 7)), rng.normal(size=5))
    path = tmp_path / "head.usdw"
    save_head(params, path)
    back = load_head(path)
    assert np.array_equal(back.W, params.W)
    assert np.array_equal(back.c, params.c)
    raw = path.read_bytes()
    assert raw[:4] == b"USDW"
    assert len(raw) == 16 + (5 * 7 + 5) * 8


def test_head_file_errors(tmp_path):
    path = tmp_path / "head.usdw"
    save_head(init_head(2, 3, seed=0), path)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"XXXX"
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError, match="magic"):
        load_head(path)
    with pytest.raises(FileNotFoundError):
        load_head(tmp_path / "missing.usdw")
