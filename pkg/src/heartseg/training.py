"""Loss, optimizer, and the training loops.

The loss couples per-frame cross entropy with a transition term that scores
the average of each adjacent frame pair, pushing the network to respect the
cadence of state changes. Optimization is plain Nesterov momentum; model
selection is early stopping on validation frame accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from . import model as model_mod
from . import preprocess, signal_io
from .autodiff import Tape, Tensor
from .errors import ConfigError, DataError
from .signal_io import FRAME_MS, NATIVE_RATE, Annotation, Recording


@dataclass
class LossConfig:
    class_weight: float = 1.0       # weight of the per-frame term
    transition_weight: float = 2.0  # weight of the adjacent-pair term
    prob_floor: float = 1e-7

    def __post_init__(self):
        if self.prob_floor <= 0 or self.prob_floor >= 0.5:
            raise ConfigError("prob_floor must lie in (0, 0.5)")


def transition_loss(logits: Tensor, labels: np.ndarray, cfg: LossConfig = LossConfig()) -> Tensor:
    """Frame plus transition cross entropy, averaged over the batch.

    For each sequence:
        L = -(1/(T*K)) * sum_t sum_k [ c1 * y * log p
                                       + c2 * ybar * log pbar ]
    where p is the softmax of the logits, ybar/pbar average frame t with
    frame t-1, and frame -1 is defined as a copy of frame 0, so the first
    pair term degenerates to the plain frame term. Probabilities are floored
    at prob_floor inside the logs; the floor region passes no gradient.
    """
    z = logits.data
    if z.ndim != 3:
        raise ConfigError("transition_loss expects logits of shape [batch, frames, states]")
    if labels.shape != z.shape:
        raise ConfigError(f"labels shape {labels.shape} does not match logits {z.shape}")
    batch, t_len, k = z.shape
    y = np.asarray(labels, dtype=np.float64)

    zs = z - z.max(axis=-1, keepdims=True)
    e = np.exp(zs)
    p = e / e.sum(axis=-1, keepdims=True)
    p_floor = np.maximum(p, cfg.prob_floor)

    pbar = np.empty_like(p)
    pbar[:, 0] = p[:, 0]
    pbar[:, 1:] = 0.5 * (p[:, 1:] + p[:, :-1])
    pbar_floor = np.maximum(pbar, cfg.prob_floor)

    ybar = np.empty_like(y)
    ybar[:, 0] = y[:, 0]
    ybar[:, 1:] = 0.5 * (y[:, 1:] + y[:, :-1])

    c1, c2 = cfg.class_weight, cfg.transition_weight
    total = c1 * y * np.log(p_floor) + c2 * ybar * np.log(pbar_floor)
    value = -total.sum() / (t_len * k * batch)
    out = Tensor(value)

    def bwd(g):
        scale = float(g) / (t_len * k * batch)
        dp = np.where(p >= cfg.prob_floor, -scale * c1 * y / p_floor, 0.0)
        dpbar = np.where(pbar >= cfg.prob_floor, -scale * c2 * ybar / pbar_floor, 0.0)
        dp[:, 0] += dpbar[:, 0]
        dp[:, 1:] += 0.5 * dpbar[:, 1:]
        dp[:, :-1] += 0.5 * dpbar[:, 1:]
        dz = p * (dp - (dp * p).sum(axis=-1, keepdims=True))
        return (dz,)

    ad.record(out, (logits,), bwd)
    return out


def frame_accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of frames whose argmax matches the one-hot labels."""
    return float(np.mean(np.argmax(logits, axis=-1) == np.argmax(labels, axis=-1)))


def nesterov_step(params: dict, velocity: dict, lr: float, momentum: float):
    """One Nesterov update in place, reading each parameter's .grad.

    Uses the lookahead realization that keeps the stored parameters at the
    evaluation point: v <- mu*v - lr*g; theta <- theta + mu*v - lr*g.
    With momentum zero this is plain gradient descent. Non-finite gradients
    abort with a diagnostic naming the parameter.
    """
    for name, p in params.items():
        g = p.grad
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise DataError(f"non-finite gradient for parameter {name!r}")
        v = momentum * velocity[name] - lr * g
        velocity[name] = v
        p.data += momentum * v - lr * g


class EarlyStopper:
    """Best-so-far tracker with a patience budget on non-improving epochs."""

    def __init__(self, patience: int):
        if patience < 1:
            raise ConfigError("patience must be >= 1")
        self.patience = patience
        self.best = -np.inf
        self.best_epoch = 0
        self.since_best = 0

    def update(self, epoch: int, value: float) -> bool:
        """Record one epoch's metric; returns True when it improved the best."""
        if value > self.best:
            self.best = value
            self.best_epoch = epoch
            self.since_best = 0
            return True
        self.since_best += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.since_best >= self.patience


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    momentum: float = 0.9
    batch_size: int = 8
    patience: int = 20
    max_epochs: int = 200
    segment_overlap: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if not (0.0 <= self.momentum < 1.0):
            raise ConfigError("momentum must lie in [0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("batch_size and max_epochs must be positive")
        if not (0.0 <= self.segment_overlap < 1.0):
            raise ConfigError("segment_overlap must lie in [0, 1)")


def prepare_arrays(pairs, overlap: float, wiener_cfg=None, frame_len: int = 20):
    """Preprocess recordings into training arrays.

    pairs: iterable of (Recording, Annotation). Returns (X, Y) with
    X[M, 3, window] filtered-and-standardized windows and Y[M, frames, 4]
    one-hot frame labels. Recordings are resampled to 1000 Hz if needed.
    """
    wiener_cfg = wiener_cfg or preprocess.WienerConfig()
    xs, ys = [], []
    for rec, ann in pairs:
        if rec.sample_rate != NATIVE_RATE:
            rec = signal_io.resample(rec, NATIVE_RATE)
        ann.validate()
        channels = preprocess.make_channels(rec, wiener_cfg)
        window = int(round(signal_io.SEGMENT_SECONDS * NATIVE_RATE))
        hop = max(1, int(round(window * (1.0 - overlap))))
        frames_per_window = window // frame_len
        for start in signal_io.window_starts(channels.shape[1], window, hop):
            xs.append(channels[:, start : start + window])
            seq = signal_io.annotation_to_frames(
                ann, window / NATIVE_RATE, FRAME_MS, start_s=start / NATIVE_RATE
            )
            onehot = np.zeros((frames_per_window, 4))
            onehot[np.arange(frames_per_window), seq.labels] = 1.0
            ys.append(onehot)
    if not xs:
        raise DataError("no training windows could be prepared")
    return np.stack(xs), np.stack(ys)


@dataclass
class FoldResult:
    history: list                 # (epoch, train_loss, val_accuracy) tuples
    best_params: dict             # name -> ndarray snapshot at best epoch
    best_epoch: int
    best_val_accuracy: float
    epochs_run: int


HISTORY_HEADER = "epoch,train_loss,val_accuracy"


def write_history(history, path):
    """History CSV with full-precision floats (stable across identical runs)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(HISTORY_HEADER + "\n")
        for epoch, loss, acc in history:
            fh.write(f"{epoch},{loss!r},{acc!r}\n")


def _batched_accuracy(params, model_cfg, x, y, batch_size):
    correct = 0
    for i in range(0, len(x), batch_size):
        logits = model_mod.forward(params, model_cfg, Tensor(x[i : i + batch_size]))
        pred = np.argmax(logits.data, axis=-1)
        correct += int(np.sum(pred == np.argmax(y[i : i + batch_size], axis=-1)))
    return correct / (y.shape[0] * y.shape[1])


def train_fold(
    train_pairs,
    val_pairs,
    model_cfg: "model_mod.ModelConfig" = None,
    loss_cfg: LossConfig = None,
    train_cfg: TrainConfig = None,
    wiener_cfg=None,
    out_dir=None,
):
    """Train one fold with early stopping on validation frame accuracy.

    Runs until the validation accuracy has not improved for `patience`
    consecutive epochs (or max_epochs as a safety cap) and returns the
    parameter snapshot from the best epoch. All randomness (parameter init,
    epoch shuffling) derives from train_cfg.seed, so reruns are identical.
    When out_dir is given, writes history.csv and best.tfan there.
    """
    model_cfg = model_cfg or model_mod.ModelConfig()
    loss_cfg = loss_cfg or LossConfig()
    train_cfg = train_cfg or TrainConfig()
    if not train_pairs or not val_pairs:
        raise DataError("training and validation sets must both be non-empty")

    x_train, y_train = prepare_arrays(
        train_pairs, train_cfg.segment_overlap, wiener_cfg, model_cfg.frame_len
    )
    x_val, y_val = prepare_arrays(val_pairs, 0.0, wiener_cfg, model_cfg.frame_len)

    seed_root = np.random.SeedSequence(train_cfg.seed)
    init_seed, shuffle_seed = seed_root.spawn(2)
    params = model_mod.init_params(model_cfg, seed=init_seed)
    shuffle_rng = np.random.default_rng(shuffle_seed)
    velocity = {name: np.zeros_like(p.data) for name, p in params.items()}

    stopper = EarlyStopper(train_cfg.patience)
    best_params = {name: p.data.copy() for name, p in params.items()}
    history = []
    epochs_run = 0
    for epoch in range(1, train_cfg.max_epochs + 1):
        epochs_run = epoch
        order = shuffle_rng.permutation(len(x_train))
        loss_sum = 0.0
        for i in range(0, len(order), train_cfg.batch_size):
            idx = order[i : i + train_cfg.batch_size]
            tape = Tape()
            with ad.recording(tape):
                logits = model_mod.forward(params, model_cfg, Tensor(x_train[idx]))
                loss = transition_loss(logits, y_train[idx], loss_cfg)
            for p in params.values():
                p.zero_grad()
            ad.backward(tape, loss)
            nesterov_step(params, velocity, train_cfg.learning_rate, train_cfg.momentum)
            loss_sum += float(loss.data) * len(idx)
        train_loss = loss_sum / len(x_train)
        val_acc = _batched_accuracy(params, model_cfg, x_val, y_val, train_cfg.batch_size)
        history.append((epoch, train_loss, val_acc))
        if stopper.update(epoch, val_acc):
            best_params = {name: p.data.copy() for name, p in params.items()}
        if stopper.should_stop:
            break

    result = FoldResult(
        history=history,
        best_params=best_params,
        best_epoch=stopper.best_epoch,
        best_val_accuracy=stopper.best,
        epochs_run=epochs_run,
    )
    if out_dir is not None:
        from pathlib import Path

        from .weights_io import save_weights

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_history(history, out / "history.csv")
        save_weights(best_params, out / "best.tfan")
    return result


def fold_partition(n_items: int, k: int, seed: int):
    """Shuffled k-fold split: list of (train_indices, val_indices).

    The first n_items % k folds get one extra validation item.
    """
    if k < 2:
        raise ConfigError("need at least 2 folds")
    if n_items < k:
        raise DataError(f"cannot split {n_items} recordings into {k} folds")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5F01D]))
    order = rng.permutation(n_items)
    base, extra = divmod(n_items, k)
    folds, pos = [], 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        val = np.sort(order[pos : pos + size])
        train = np.sort(np.concatenate([order[:pos], order[pos + size :]]))
        folds.append((train, val))
        pos += size
    return folds


@dataclass
class CvResult:
    folds: list = field(default_factory=list)  # FoldResult per fold
    partitions: list = field(default_factory=list)
    best_fold: int = 0


def cross_validate(
    pairs,
    model_cfg=None,
    loss_cfg=None,
    train_cfg: TrainConfig = None,
    k: int = 5,
    out_dir=None,
) -> CvResult:
    """k-fold cross validation over recordings (split by recording, not window).

    Each fold trains on the other folds' recordings and validates on its
    own; per-fold seeds derive from the run seed so the whole run is
    reproducible. Returns every fold's result plus the index of the fold
    with the best validation accuracy (lowest index wins ties).
    """
    train_cfg = train_cfg or TrainConfig()
    pairs = list(pairs)
    result = CvResult()
    for fold_i, (train_idx, val_idx) in enumerate(fold_partition(len(pairs), k, train_cfg.seed)):
        fold_cfg = replace(train_cfg, seed=train_cfg.seed * 1000 + fold_i)
        fold_out = None if out_dir is None else f"{out_dir}/fold{fold_i}"
        fold = train_fold(
            [pairs[i] for i in train_idx],
            [pairs[i] for i in val_idx],
            model_cfg,
            loss_cfg,
            fold_cfg,
            out_dir=fold_out,
        )
        result.folds.append(fold)
        result.partitions.append((train_idx, val_idx))
    best = int(np.argmax([f.best_val_accuracy for f in result.folds]))
    result.best_fold = best
    return result
