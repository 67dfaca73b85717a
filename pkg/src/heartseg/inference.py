"""Whole-recording inference: sliding windows, cyclic Viterbi, onset export.

The network scores 2-second windows; recordings are covered with
50%-overlapping windows whose per-frame probabilities are averaged, then a
Viterbi pass over the four-state cycle turns frame probabilities into a
label sequence that can only move S1 -> systole -> S2 -> diastole -> S1.
"""

from __future__ import annotations

import numpy as np

from . import model as model_mod
from . import preprocess, signal_io
from .autodiff import Tensor
from .errors import DataError
from .signal_io import (
    FRAME_MS,
    NATIVE_RATE,
    STATES,
    Annotation,
    Recording,
    StateSequence,
)

#: Cyclic transition probabilities: stay or advance, half and half.
TRANSITION_MATRIX = np.array(
    [
        [0.5, 0.5, 0.0, 0.0],
        [0.0, 0.5, 0.5, 0.0],
        [0.0, 0.0, 0.5, 0.5],
        [0.5, 0.0, 0.0, 0.5],
    ]
)


def sliding_logits(
    params: dict,
    model_cfg: "model_mod.ModelConfig",
    channels: np.ndarray,
    batch_size: int = 16,
) -> np.ndarray:
    """Per-frame state probabilities for a whole recording.

    channels is the [3, n] filtered input at 1000 Hz. Windows of 2 s start
    at 1 s multiples; overlapping frames average their softmax
    probabilities. If samples remain past the last regular window, one extra
    window is placed so it ends at the last whole frame, and only its
    not-yet-covered frames are used, so every frame is covered once or
    twice. Returns [n_frames, 4] rows summing to one.
    """
    n = channels.shape[1]
    frame_len = model_cfg.frame_len
    window = int(round(signal_io.SEGMENT_SECONDS * NATIVE_RATE))
    n_usable = (n // frame_len) * frame_len
    if n_usable < window:
        raise DataError(f"recording of {n} samples is shorter than one {window}-sample window")
    hop = window // 2
    starts = list(range(0, n_usable - window + 1, hop))
    covered_end = starts[-1] + window
    tail_start = None
    if covered_end < n_usable:
        tail_start = n_usable - window
        starts.append(tail_start)

    frames_per_window = window // frame_len
    n_frames = n_usable // frame_len
    prob_sum = np.zeros((n_frames, len(STATES)))
    counts = np.zeros(n_frames)

    windows = np.stack([channels[:, s : s + window] for s in starts])
    probs = []
    for i in range(0, len(windows), batch_size):
        logits = model_mod.forward(params, model_cfg, Tensor(windows[i : i + batch_size]))
        z = logits.data - logits.data.max(axis=-1, keepdims=True)
        e = np.exp(z)
        probs.append(e / e.sum(axis=-1, keepdims=True))
    probs = np.concatenate(probs)

    for s, p in zip(starts, probs):
        f0 = s // frame_len
        if tail_start is not None and s == tail_start:
            skip = (covered_end - tail_start) // frame_len
            prob_sum[f0 + skip : f0 + frames_per_window] += p[skip:]
            counts[f0 + skip : f0 + frames_per_window] += 1
        else:
            prob_sum[f0 : f0 + frames_per_window] += p
            counts[f0 : f0 + frames_per_window] += 1
    return prob_sum / counts[:, None]


def viterbi_decode(
    probs: np.ndarray, transition: np.ndarray = TRANSITION_MATRIX
) -> StateSequence:
    """Most probable cyclic state path for per-frame probabilities.

    Runs in the log domain with a uniform initial prior; ties take the
    lowest state index. Transitions with zero probability are never taken.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[1] != transition.shape[0]:
        raise DataError("probability table must be [frames, n_states]")
    if len(probs) == 0:
        raise DataError("cannot decode an empty probability table")
    with np.errstate(divide="ignore"):
        log_a = np.log(transition)
        log_p = np.log(np.maximum(probs, 1e-300))
    m, k = log_p.shape
    score = log_p[0].copy()
    back = np.zeros((m, k), dtype=np.int64)
    for t in range(1, m):
        cand = score[:, None] + log_a  # [from, to]
        back[t] = np.argmax(cand, axis=0)
        score = cand[back[t], np.arange(k)] + log_p[t]
    path = np.empty(m, dtype=np.int64)
    path[-1] = int(np.argmax(score))
    for t in range(m - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return StateSequence(path, FRAME_MS / 1000.0)


def states_to_onsets(seq: StateSequence) -> Annotation:
    """Run-length encode a frame label sequence into state onsets.

    Each run of equal labels becomes one onset at its first frame's start
    time; the sequence's own state at time zero is included.
    """
    if len(seq) == 0:
        raise DataError("empty state sequence")
    labels = seq.labels
    change = np.flatnonzero(np.diff(labels)) + 1
    starts = np.concatenate([[0], change])
    ann = Annotation([(float(i * seq.frame_s), STATES[labels[i]]) for i in starts])
    ann.validate()
    return ann


def segment_recording(
    params: dict,
    model_cfg: "model_mod.ModelConfig",
    rec: Recording,
    wiener_cfg=None,
) -> Annotation:
    """Full pipeline for one recording: filter, score, decode, export onsets."""
    if rec.sample_rate != NATIVE_RATE:
        rec = signal_io.resample(rec, NATIVE_RATE)
    channels = preprocess.make_channels(rec, wiener_cfg or preprocess.WienerConfig())
    probs = sliding_logits(params, model_cfg, channels)
    return states_to_onsets(viterbi_decode(probs))
