import numpy as np
import pytest

from semhash.featureio import FeatureSet
from semhash.head import forward, init_head
from semhash.losses import LossWeights
from semhash.synth import augment_with_orthogonal, make_clusters
from semhash.trainer import (TrainConfig, TrainingError, encode_block,
                             format_log_line, make_batches, rho_sweep, train)


def tiny_features(n=8, d=4, seed=0, rotations=0):
    fs = make_clusters(n, d, 2, separation=4.0, seed=seed)
    for r in range(rotations):
        fs = augment_with_orthogonal(fs, seed + 100 + r)
    return fs


def tiny_config(**overrides):
    base = dict(k=8, lr=1e-4, epochs_stage1=5, epochs_stage2=0, batch_size=4, seed=1)
    base.update(overrides)
    return TrainConfig(**base)


# --- make_batches ---


def test_batches_deterministic():
    fs = tiny_features(n=4)
    a = make_batches(fs, 2, seed=3, epoch=0)
    b = make_batches(fs, 2, seed=3, epoch=0)
    assert [x.tolist() for x in a] == [x.tolist() for x in b]
    assert sorted(np.concatenate(a).tolist()) == [0, 1, 2, 3]
    c = make_batches(fs, 2, seed=3, epoch=1)
    assert [x.tolist() for x in a] != [x.tolist() for x in c]


def test_batches_drop_singleton_remainder():
    fs = tiny_features(n=5)
    batches = make_batches(fs, 2, seed=0, epoch=0)
    assert len(batches) == 2
    assert sum(len(b) for b in batches) == 4


def test_batches_keep_remainder_of_two():
    fs = tiny_features(n=5)
    batches = make_batches(fs, 3, seed=0, epoch=0)
    assert [len(b) for b in batches] == [3, 2]


def test_batches_reject_oversized_batch():
    fs = tiny_features(n=4)
    with pytest.raises(ValueError):
        make_batches(fs, 5, seed=0, epoch=0)


def test_batches_drop_uniformly_over_epochs():
    fs = tiny_features(n=5)
    dropped = np.zeros(5)
    for epoch in range(100):
        kept = np.concatenate(make_batches(fs, 2, seed=7, epoch=epoch))
        for i in range(5):
            if i not in kept:
                dropped[i] += 1
    # each index dropped with p = 1/5: binomial mean 20, sigma 4
    assert np.all(dropped >= 20 - 3 * 4)
    assert np.all(dropped <= 20 + 3 * 4)


# --- config validation ---


def test_config_validation():
    with pytest.raises(ValueError):
        tiny_config(lr=0.0)
    with pytest.raises(ValueError):
        tiny_config(batch_size=1)
    with pytest.raises(ValueError):
        tiny_config(epochs_stage1=-1)
    with pytest.raises(ValueError):
        tiny_config(momentum=1.0)
    with pytest.raises(ValueError):
        tiny_config(rho=0.0)


# --- train ---


def test_zero_epochs_returns_seeded_init():
    fs = tiny_features()
    cfg = tiny_config(epochs_stage1=0, epochs_stage2=0)
    trace = train(fs, cfg)
    init = init_head(cfg.k, fs.d, cfg.seed)
    assert trace.reports == []
    assert np.array_equal(trace.params.W, init.W)
    assert np.array_equal(trace.params.c, init.c)


def test_training_is_bitwise_deterministic():
    fs = tiny_features()
    cfg = tiny_config(epochs_stage1=6)
    a = train(fs, cfg)
    b = train(fs, cfg)
    assert np.array_equal(a.params.W, b.params.W)
    assert np.array_equal(a.params.c, b.params.c)
    for ra, rb in zip(a.reports, b.reports):
        assert ra.total == rb.total


def test_trace_length_and_log_lines():
    fs = tiny_features()
    lines = []
    trace = train(fs, tiny_config(epochs_stage1=3), log=lines.append)
    assert len(trace.reports) == 3
    assert len(trace.epoch_seconds) == 3
    assert lines[0].startswith("epoch=0 j1=")
    assert "total=" in lines[0]


def test_loss_descends_on_tiny_instance():
    # full batch keeps the per-epoch objective fixed, so descent is
    # measurable; at lr = 1e-3 the example property (final < initial)
    # holds, and at 3e-4 descent is essentially monotone
    fs = tiny_features(n=8, d=4)
    trace = train(fs, tiny_config(epochs_stage1=50, lr=1e-3, batch_size=8))
    totals = [r.total for r in trace.reports]
    assert totals[-1] < totals[0]

    trace = train(fs, tiny_config(epochs_stage1=50, lr=3e-4, batch_size=8))
    totals = [r.total for r in trace.reports]
    assert totals[-1] < totals[0]
    increases = sum(1 for a, b in zip(totals, totals[1:]) if b > a)
    assert increases < 0.1 * len(totals)


def test_stage2_without_rotations_is_an_error():
    fs = tiny_features(rotations=0)
    with pytest.raises(TrainingError, match="R=0"):
        train(fs, tiny_config(epochs_stage2=3))


def test_stage2_with_zero_gamma_matches_stage1_updates():
    fs = tiny_features(n=8, d=4, rotations=1)
    weights = LossWeights(1.0, 0.01, 1.0, 0.0)
    two_stage = train(fs, tiny_config(epochs_stage1=4, epochs_stage2=4, weights=weights))
    one_stage = train(fs, tiny_config(epochs_stage1=8, epochs_stage2=0, weights=weights))
    assert np.array_equal(two_stage.params.W, one_stage.params.W)
    assert np.array_equal(two_stage.params.c, one_stage.params.c)


def test_stage2_reports_rotation_loss():
    fs = tiny_features(n=8, d=4, rotations=1)
    trace = train(fs, tiny_config(epochs_stage1=2, epochs_stage2=2))
    assert trace.reports[0].j4 == 0.0
    assert trace.reports[-1].j4 > 0.0


def test_non_finite_loss_aborts_naming_term():
    fs = tiny_features(n=8, d=4)
    with pytest.raises(TrainingError, match="non-finite j"):
        with np.errstate(all="ignore"):
            train(fs, tiny_config(epochs_stage1=5, lr=1e200))


def test_divergence_guard_aborts(monkeypatch):
    # the L1 losses have bounded gradients, so a genuine 1e6x blow-up is
    # unreachable; tighten the guard to exercise the abort path
    import semhash.trainer as trainer_module
    monkeypatch.setattr(trainer_module, "DIVERGENCE_FACTOR", 1.0001)
    fs = tiny_features(n=8, d=4)
    with pytest.raises(TrainingError, match="diverged"):
        train(fs, tiny_config(epochs_stage1=50, lr=1e-5, batch_size=4))


def test_batch_size_larger_than_dataset():
    fs = tiny_features(n=4)
    with pytest.raises(TrainingError, match="batch"):
        train(fs, tiny_config(batch_size=16))


def test_format_log_line():
    from semhash.losses import LossReport
    report = LossReport(j1=1.0, j2=0.25, j3=0.5, j4=0.0, total=1.8, mu=np.zeros(2))
    assert format_log_line(3, report) == "epoch=3 j1=1 j2=0.25 j3=0.5 j4=0 total=1.8"


# --- encode + sweep ---


def test_encode_block_ids_are_row_indices():
    fs = tiny_features(n=6, d=4, rotations=1)
    params = init_head(8, 4, seed=0)
    cb = encode_block(params, fs)
    assert cb.n == 6 and cb.k == 8
    assert np.array_equal(cb.ids, np.arange(6, dtype=np.uint64))
    cb_rot = encode_block(params, fs, block=1)
    assert cb_rot.n == 6


def test_rho_sweep_single_value_equals_plain_run():
    fs = make_clusters(60, 8, 3, separation=6.0, seed=5)
    cfg = tiny_config(epochs_stage1=10, batch_size=8)
    rows = rho_sweep(fs, cfg, [1.0], n_queries=12, eval_k=10)
    assert len(rows) == 1 and rows[0][0] == 1.0
    again = rho_sweep(fs, cfg, [1.0], n_queries=12, eval_k=10)
    assert rows == again
    assert 0.0 <= rows[0][1] <= 1.0


def test_rho_sweep_validation():
    fs = make_clusters(30, 8, 3, seed=5)
    cfg = tiny_config()
    with pytest.raises(ValueError, match="nonempty"):
        rho_sweep(fs, cfg, [])
    unlabeled = FeatureSet(fs.data)
    with pytest.raises(ValueError, match="labels"):
        rho_sweep(unlabeled, cfg, [1.0])
