"""Loss, optimizer, early stopping, and fold training checks."""

import math

import numpy as np
import pytest

from heartseg import training
from heartseg.autodiff import Tape, Tensor, backward, recording
from heartseg.errors import ConfigError, DataError
from heartseg.model import ModelConfig
from heartseg.signal_io import NATIVE_RATE, STATES, Annotation, Recording
from heartseg.training import (
    EarlyStopper,
    LossConfig,
    TrainConfig,
    fold_partition,
    frame_accuracy,
    nesterov_step,
    prepare_arrays,
    train_fold,
    transition_loss,
    write_history,
)
from conftest import gradcheck


def _loss_reference(z, y, cfg):
    """Scalar-loop restatement of the loss for oracle comparison."""
    batch, t_len, k = z.shape
    total = 0.0
    for b in range(batch):
        p = np.empty((t_len, k))
        for t in range(t_len):
            e = np.exp(z[b, t] - z[b, t].max())
            p[t] = e / e.sum()
        for t in range(t_len):
            for j in range(k):
                pbar = p[t, j] if t == 0 else 0.5 * (p[t, j] + p[t - 1, j])
                ybar = y[b, t, j] if t == 0 else 0.5 * (y[b, t, j] + y[b, t - 1, j])
                total += cfg.class_weight * y[b, t, j] * math.log(max(p[t, j], cfg.prob_floor))
                total += cfg.transition_weight * ybar * math.log(max(pbar, cfg.prob_floor))
    return -total / (t_len * k * batch)


def test_loss_matches_scalar_reference(rng):
    z = Tensor(rng.standard_normal((3, 7, 4)))
    labels = np.zeros((3, 7, 4))
    labels[np.arange(3)[:, None], np.arange(7)[None, :], rng.integers(0, 4, (3, 7))] = 1.0
    for cfg in (LossConfig(), LossConfig(class_weight=0.3, transition_weight=1.7)):
        got = transition_loss(z, labels, cfg)
        want = _loss_reference(z.data, labels, cfg)
        assert got.data == pytest.approx(want, rel=1e-13)


def test_loss_perfect_two_frame_value():
    """A confident, correct prediction across one state change.

    The frame term vanishes and the pair term pays for the blended
    transition frame: 2 * ln 2 / (2 frames * 4 states).
    """
    labels = np.array([[[1.0, 0, 0, 0], [0, 1.0, 0, 0]]])
    logits = Tensor(50.0 * labels)
    loss = transition_loss(logits, labels)
    assert float(loss.data) == pytest.approx(0.17328679513998632, abs=1e-15)


def test_loss_gradcheck(rng):
    z = Tensor(rng.standard_normal((2, 5, 4)), requires_grad=True)
    labels = np.zeros((2, 5, 4))
    labels[np.arange(2)[:, None], np.arange(5)[None, :], rng.integers(0, 4, (2, 5))] = 1.0
    cfg = LossConfig(class_weight=0.8, transition_weight=1.5)
    gradcheck(lambda: transition_loss(z, labels, cfg), [z], n_coords=40)


def test_loss_shape_validation(rng):
    z = Tensor(rng.standard_normal((2, 5, 4)))
    with pytest.raises(ConfigError):
        transition_loss(z, np.zeros((2, 5, 3)))
    with pytest.raises(ConfigError):
        transition_loss(Tensor(rng.standard_normal((5, 4))), np.zeros((5, 4)))
    with pytest.raises(ConfigError):
        LossConfig(prob_floor=0.0)


def test_frame_accuracy():
    logits = np.array([[[0.9, 0.1], [0.2, 0.8]], [[0.6, 0.4], [0.7, 0.3]]])
    labels = np.array([[[1.0, 0.0], [0.0, 1.0]], [[0.0, 1.0], [1.0, 0.0]]])
    assert frame_accuracy(logits, labels) == pytest.approx(0.75)


def test_nesterov_single_step_from_rest(rng):
    theta0 = rng.standard_normal((3, 2))
    g = rng.standard_normal((3, 2))
    p = Tensor(theta0.copy(), requires_grad=True)
    p.grad = g.copy()
    velocity = {"p": np.zeros_like(theta0)}
    nesterov_step({"p": p}, velocity, lr=0.01, momentum=0.9)
    np.testing.assert_allclose(p.data, theta0 - (1 + 0.9) * 0.01 * g, atol=1e-15)
    np.testing.assert_allclose(velocity["p"], -0.01 * g, atol=1e-15)


def test_nesterov_minimizes_quadratic():
    p = Tensor(np.array([4.0, -3.0]), requires_grad=True)
    velocity = {"p": np.zeros(2)}
    for _ in range(200):
        p.grad = p.data.copy()  # gradient of 0.5 * |theta|^2
        nesterov_step({"p": p}, velocity, lr=0.05, momentum=0.9)
    assert np.all(np.abs(p.data) < 1e-6)


def test_nesterov_rejects_non_finite():
    p = Tensor(np.zeros(2), requires_grad=True)
    p.grad = np.array([1.0, np.nan])
    with pytest.raises(DataError, match="non-finite"):
        nesterov_step({"p": p}, {"p": np.zeros(2)}, lr=0.1, momentum=0.9)


def test_nesterov_skips_gradless_params():
    p = Tensor(np.ones(2), requires_grad=True)
    nesterov_step({"p": p}, {"p": np.zeros(2)}, lr=0.1, momentum=0.9)
    np.testing.assert_array_equal(p.data, np.ones(2))


def test_early_stopper_patience():
    stopper = EarlyStopper(patience=20)
    for epoch in range(1, 31):
        assert stopper.update(epoch, epoch / 100.0)
        assert not stopper.should_stop
    for epoch in range(31, 51):
        assert not stopper.update(epoch, 0.30)  # ties do not improve
    assert stopper.should_stop
    assert stopper.best_epoch == 30
    assert stopper.best == pytest.approx(0.30)


def test_early_stopper_validation():
    with pytest.raises(ConfigError):
        EarlyStopper(patience=0)


def test_fold_partition_covers_everything():
    folds = fold_partition(23, 5, seed=1)
    sizes = [len(val) for _, val in folds]
    assert sizes == [5, 5, 5, 4, 4]
    all_val = np.concatenate([val for _, val in folds])
    assert sorted(all_val.tolist()) == list(range(23))
    for train, val in folds:
        assert len(np.intersect1d(train, val)) == 0
        assert len(train) + len(val) == 23


def test_fold_partition_deterministic():
    a = fold_partition(10, 5, seed=3)
    b = fold_partition(10, 5, seed=3)
    c = fold_partition(10, 5, seed=4)
    for (ta, va), (tb, vb) in zip(a, b):
        np.testing.assert_array_equal(ta, tb)
        np.testing.assert_array_equal(va, vb)
    assert any(not np.array_equal(va, vc) for (_, va), (_, vc) in zip(a, c))


def test_fold_partition_validation():
    with pytest.raises(ConfigError):
        fold_partition(10, 1, seed=0)
    with pytest.raises(DataError):
        fold_partition(3, 5, seed=0)


def _toy_pair(duration_s, seed=0, fs=NATIVE_RATE):
    """Recording with a click train and the matching annotation."""
    rng = np.random.default_rng(seed)
    n = int(duration_s * fs)
    samples = 0.01 * rng.standard_normal(n)
    onsets = []
    t, idx = 0.1, 0
    while t < duration_s - 0.05:
        onsets.append((t, STATES[idx % 4]))
        sample = int(t * fs)
        samples[sample : sample + 20] += 0.5
        t += 0.25
        idx += 1
    rec = Recording(samples=samples, sample_rate=fs)
    return rec, Annotation(onsets=onsets)


def test_prepare_arrays_shapes_and_onehot():
    pairs = [_toy_pair(4.5, seed=0), _toy_pair(2.0, seed=1)]
    x, y = prepare_arrays(pairs, overlap=0.5)
    # 4.5 s gives starts [0, 1000, 2000, 2500]; 2.0 s gives [0].
    assert x.shape == (5, 3, 2000)
    assert y.shape == (5, 100, 4)
    np.testing.assert_array_equal(y.sum(axis=-1), np.ones((5, 100)))
    assert set(np.unique(y)) == {0.0, 1.0}


def test_prepare_arrays_resamples():
    rec, ann = _toy_pair(3.0, fs=2000)
    x, y = prepare_arrays([(rec, ann)], overlap=0.0)
    assert x.shape[2] == 2000  # 3 s at the native rate, one full window
    assert x.shape[0] == 2


def test_prepare_arrays_rejects_short_recording():
    rec, ann = _toy_pair(1.5)
    with pytest.raises(DataError):
        prepare_arrays([(rec, ann)], overlap=0.5)


def test_write_history(tmp_path):
    path = tmp_path / "history.csv"
    write_history([(1, 0.5, 0.25), (2, 0.25, 0.75)], path)
    lines = path.read_text().splitlines()
    assert lines[0] == "epoch,train_loss,val_accuracy"
    assert lines[1] == "1,0.5,0.25"
    assert len(lines) == 3


_TINY_MODEL = ModelConfig(
    encoder_channels=(4, 4, 8, 8),
    decoder_channels=(8, 16),
    lstm_hidden=8,
)


def test_train_fold_runs_are_identical(tmp_path):
    train_pairs = [_toy_pair(2.0, seed=i) for i in range(3)]
    val_pairs = [_toy_pair(2.0, seed=9)]
    cfg = TrainConfig(max_epochs=3, patience=20, batch_size=2, seed=5)

    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    r1 = train_fold(train_pairs, val_pairs, _TINY_MODEL, train_cfg=cfg, out_dir=out1)
    r2 = train_fold(train_pairs, val_pairs, _TINY_MODEL, train_cfg=cfg, out_dir=out2)

    assert r1.history == r2.history
    assert r1.epochs_run == 3
    assert r1.best_epoch == r2.best_epoch
    for name in r1.best_params:
        np.testing.assert_array_equal(r1.best_params[name], r2.best_params[name])
    assert (out1 / "best.tfan").read_bytes() == (out2 / "best.tfan").read_bytes()
    assert (out1 / "history.csv").read_text() == (out2 / "history.csv").read_text()


def test_train_fold_loss_decreases():
    train_pairs = [_toy_pair(2.0, seed=i) for i in range(3)]
    val_pairs = [_toy_pair(2.0, seed=9)]
    cfg = TrainConfig(max_epochs=8, patience=20, batch_size=4, seed=2, learning_rate=0.01)
    result = train_fold(train_pairs, val_pairs, _TINY_MODEL, train_cfg=cfg)
    losses = [row[1] for row in result.history]
    assert losses[-1] < losses[0]


def test_train_fold_requires_data():
    with pytest.raises(DataError):
        train_fold([], [_toy_pair(2.0)], _TINY_MODEL, train_cfg=TrainConfig(max_epochs=1))
