import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semhash.similarity import batch_similarity, pair_similarity


def test_identical_vectors_give_one():
    x = np.array([0.3, -2.0, 5.5])
    assert pair_similarity(x, x, rho=1.0) == 1.0
    assert pair_similarity(x, x, rho=0.01) == 1.0


def test_hand_computed_value():
    # distance sqrt(2), rho*d = 4: exp(-sqrt(2)/4), evaluated independently
    x_i = np.array([1.0, 0.0, 0.0, 0.0])
    x_j = np.array([0.0, 1.0, 0.0, 0.0])
    expected = math.exp(-math.sqrt(2.0) / 4.0)
    got = pair_similarity(x_i, x_j, rho=1.0)
    assert got == pytest.approx(expected, rel=1e-12)
    assert got == pytest.approx(0.70219, abs=1e-5)


def test_rho_limit_monotone():
    x_i = np.array([1.0, 0.0])
    x_j = np.array([0.0, 2.0])
    values = [pair_similarity(x_i, x_j, rho) for rho in (0.5, 1.0, 10.0, 1e6)]
    assert all(a < b for a, b in zip(values, values[1:]))
    assert values[-1] == pytest.approx(1.0, abs=1e-5)


def test_distance_monotonicity():
    base = np.zeros(4)
    prev = 1.0
    for scale in (0.5, 1.0, 2.0, 4.0):
        val = pair_similarity(base, scale * np.ones(4), rho=1.0)
        assert val < prev
        prev = val


def test_input_validation():
    with pytest.raises(ValueError, match="mismatch"):
        pair_similarity(np.zeros(3), np.zeros(4), rho=1.0)
    with pytest.raises(ValueError, match="non-finite"):
        pair_similarity(np.array([np.inf]), np.array([0.0]), rho=1.0)
    with pytest.raises(ValueError, match="rho"):
        pair_similarity(np.zeros(2), np.zeros(2), rho=0.0)
    with pytest.raises(ValueError, match="m >= 2"):
        batch_similarity(np.zeros((1, 3)), rho=1.0)


def test_identical_rows_give_all_ones():
    batch = np.tile([1.0, 2.0, 3.0], (4, 1))
    S = batch_similarity(batch, rho=2.0)
    assert np.array_equal(S, np.ones((4, 4)))


def test_two_row_batch_matches_hand_value():
    batch = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])
    S = batch_similarity(batch, rho=1.0)
    expected = math.exp(-math.sqrt(2.0) / 4.0)
    assert S[0, 1] == pytest.approx(expected, rel=1e-12)
    assert S[1, 0] == pytest.approx(expected, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(2, 8), d=st.integers(1, 6),
       rho=st.floats(0.1, 10.0))
def test_batch_matches_pairwise_oracle(seed, m, d, rho):
    rng = np.random.default_rng(seed)
    batch = rng.normal(size=(m, d))
    S = batch_similarity(batch, rho)
    assert np.array_equal(S, S.T)
    assert np.array_equal(np.diag(S), np.ones(m))
    assert np.all((S > 0) & (S <= 1))
    for i in range(m):
        for j in range(m):
            assert S[i, j] == pytest.approx(
                pair_similarity(batch[i], batch[j], rho), rel=1e-12)
