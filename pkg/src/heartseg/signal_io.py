"""Recording and annotation I/O, resampling, windowing and frame labeling.

Everything downstream works on a `Recording` (float64 mono samples plus a
sample rate) and an `Annotation` (sorted state onsets). Annotations use the
four cyclic states S1 -> systole -> S2 -> diastole.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import firwin, upfirdn

from .errors import ConfigError, DataError, FormatError

STATES = ("S1", "systole", "S2", "diastole")
STATE_INDEX = {s: i for i, s in enumerate(STATES)}

#: Default analysis frame length: 20 ms at the pipeline's native 1000 Hz.
FRAME_MS = 20.0
NATIVE_RATE = 1000
SEGMENT_SECONDS = 2.0


def next_state(state: str) -> str:
    """Cyclic successor of a state name."""
    return STATES[(STATE_INDEX[state] + 1) % 4]


def previous_state(state: str) -> str:
    """Cyclic predecessor of a state name."""
    return STATES[(STATE_INDEX[state] - 1) % 4]


@dataclass
class Recording:
    """Mono audio samples with their sample rate.

    samples are float64; loaders normalize peak amplitude into [-1, 1].
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise DataError("recording samples must be one-dimensional")
        if not np.all(np.isfinite(self.samples)):
            raise DataError("recording contains non-finite samples")
        if self.sample_rate <= 0:
            raise DataError("sample rate must be positive")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class Annotation:
    """State onsets in seconds, strictly increasing, cyclically ordered."""

    onsets: list = field(default_factory=list)  # list of (onset_seconds, state)

    def validate(self):
        if not self.onsets:
            raise DataError("annotation is empty")
        prev_t = -math.inf
        prev_state = None
        for t, state in self.onsets:
            if state not in STATE_INDEX:
                raise DataError(f"unknown state name {state!r}")
            if not (t >= 0 and math.isfinite(t)):
                raise DataError(f"onset time {t!r} is not a finite non-negative number")
            if t <= prev_t:
                raise DataError(f"onset times must be strictly increasing (at {t})")
            if prev_state is not None and state != next_state(prev_state):
                raise DataError(
                    f"state {state!r} does not follow {prev_state!r} in the cardiac cycle"
                )
            prev_t, prev_state = t, state
        return self

    def times(self, state: str) -> np.ndarray:
        """Onset times of one state, as a sorted array."""
        return np.array([t for t, s in self.onsets if s == state], dtype=np.float64)

    def __len__(self):
        return len(self.onsets)


@dataclass
class Segment:
    """A fixed-length window cut from a recording."""

    samples: np.ndarray
    start_sample: int
    sample_rate: int

    @property
    def start_s(self) -> float:
        return self.start_sample / self.sample_rate


@dataclass
class StateSequence:
    """Per-frame state labels (integer codes into STATES) plus frame length."""

    labels: np.ndarray
    frame_s: float = FRAME_MS / 1000.0

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.ndim != 1:
            raise DataError("frame labels must be one-dimensional")
        if len(self.labels) and not np.all((self.labels >= 0) & (self.labels < 4)):
            raise DataError("frame labels must be state codes 0..3")

    def __len__(self):
        return len(self.labels)


def load_wav(path) -> Recording:
    """Load a RIFF WAV file as a mono Recording.

    Accepts 16-bit PCM and 32-bit float encodings. Multichannel files keep
    the first channel. Integer samples are scaled by 1/32768; if the peak
    still exceeds 1 the whole signal is divided by its max absolute value.

    Raises
    ------
    FormatError
        If the file is not parseable WAV or uses an unsupported encoding.
    DataError
        If the file holds no samples.
    """
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except Exception as exc:  # scipy raises bare ValueError on bad headers
        raise FormatError(f"{path}: not a readable WAV file ({exc})") from exc
    if data.ndim == 2:
        data = data[:, 0]
    if data.size == 0:
        raise DataError(f"{path}: WAV file holds no samples")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise FormatError(
            f"{path}: unsupported WAV encoding {data.dtype}; expected int16 or float32"
        )
    peak = np.max(np.abs(samples)) if samples.size else 0.0
    if peak > 1.0:
        samples = samples / peak
    return Recording(samples, int(rate))


def write_wav(rec: Recording, path, encoding: str = "int16"):
    """Write a Recording as RIFF WAV, 16-bit PCM by default.

    encoding: "int16" (samples scaled by 32768 and clipped) or "float32".
    """
    if encoding == "int16":
        scaled = np.clip(np.round(rec.samples * 32768.0), -32768, 32767)
        wavfile.write(path, rec.sample_rate, scaled.astype(np.int16))
    elif encoding == "float32":
        wavfile.write(path, rec.sample_rate, rec.samples.astype(np.float32))
    else:
        raise ConfigError(f"unsupported WAV encoding {encoding!r}")


ANNOTATION_HEADER = ["onset_seconds", "state"]


def read_annotation(path) -> Annotation:
    """Read an onset CSV (`onset_seconds,state` header, UTF-8) and validate it."""
    onsets = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty annotation file") from None
        if [h.strip() for h in header] != ANNOTATION_HEADER:
            raise FormatError(
                f"{path}: expected header 'onset_seconds,state', got {','.join(header)!r}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise FormatError(f"{path}:{lineno}: expected two columns")
            try:
                t = float(row[0])
            except ValueError:
                raise FormatError(f"{path}:{lineno}: bad onset time {row[0]!r}") from None
            state = row[1].strip()
            if state not in STATE_INDEX:
                raise FormatError(f"{path}:{lineno}: unknown state {row[1]!r}")
            onsets.append((t, state))
    ann = Annotation(onsets)
    ann.validate()
    return ann


def write_annotation(ann: Annotation, path):
    """Write an Annotation as an onset CSV with LF line endings."""
    ann.validate()
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ANNOTATION_HEADER)
        for t, state in ann.onsets:
            writer.writerow([repr(float(t)), state])


def resample(rec: Recording, target_rate: int) -> Recording:
    """Rate-convert with a Kaiser-windowed sinc low-pass and polyphase filtering.

    The anti-alias cutoff is 0.45 of the lower of the two rates (beta = 8).
    Edges are replicated before filtering so constant signals stay constant.
    Output duration matches the input within one output sample.
    """
    if target_rate <= 0:
        raise ConfigError("target sample rate must be positive")
    if target_rate == rec.sample_rate:
        return Recording(rec.samples.copy(), rec.sample_rate)
    x = rec.samples
    if x.size < 2:
        raise DataError("recording too short to resample")
    g = math.gcd(int(target_rate), int(rec.sample_rate))
    up, down = target_rate // g, rec.sample_rate // g
    inter_rate = rec.sample_rate * up
    cutoff = 0.45 * min(rec.sample_rate, target_rate)
    numtaps = 2 * 32 * max(up, down) + 1
    h = firwin(numtaps, cutoff, window=("kaiser", 8.0), fs=inter_rate) * up
    delay = (numtaps - 1) // 2
    # Replicate edges far enough to absorb the filter transient, choosing the
    # pad so the group delay lands on an exact output-sample phase.
    edge_pad = delay // up + 1
    while (edge_pad * up + delay) % down != 0:
        edge_pad += 1
    xp = np.pad(x, (edge_pad, edge_pad + down), mode="edge")
    y = upfirdn(h, xp, up=up, down=down)
    j0 = (edge_pad * up + delay) // down
    out_len = (len(x) - 1) * up // down + 1
    return Recording(y[j0 : j0 + out_len], int(target_rate))


def window_starts(n_samples: int, window: int, hop: int) -> list:
    """Start offsets for `window`-long cuts: multiples of `hop`, plus one final
    window ending exactly at the last sample when the tail would otherwise be
    left uncovered."""
    if n_samples < window:
        raise DataError(
            f"recording of {n_samples} samples is shorter than one {window}-sample window"
        )
    starts = list(range(0, n_samples - window + 1, hop))
    if starts[-1] + window < n_samples:
        starts.append(n_samples - window)
    return starts


def slice_segments(rec: Recording, overlap_fraction: float = 0.5) -> list:
    """Cut a recording into 2-second windows.

    Windows start at multiples of the hop (window length times
    1 - overlap_fraction); if a tail remains, one final window is taken so it
    ends exactly at the last sample.
    """
    if not (0.0 <= overlap_fraction < 1.0):
        raise ConfigError("overlap_fraction must lie in [0, 1)")
    window = int(round(SEGMENT_SECONDS * rec.sample_rate))
    hop = max(1, int(round(window * (1.0 - overlap_fraction))))
    return [
        Segment(rec.samples[s : s + window], s, rec.sample_rate)
        for s in window_starts(len(rec.samples), window, hop)
    ]


def n_frames_for_duration(duration_s: float, frame_ms: float = FRAME_MS) -> int:
    """Number of whole analysis frames in a duration (trailing remainder dropped)."""
    return int(math.floor(duration_s * 1000.0 / frame_ms + 1e-9))


def annotation_to_frames(
    ann: Annotation, duration_s: float, frame_ms: float = FRAME_MS, start_s: float = 0.0
) -> StateSequence:
    """Label every frame with the state active at its midpoint.

    A frame starting at t covers [t, t + frame). The state active at time t
    is the one whose onset is the latest onset <= t, so a state beginning
    exactly at a midpoint claims that frame. Frames before the first onset
    take the state cyclically preceding it.

    start_s shifts the frame grid; the default grid starts at zero.
    """
    ann.validate()
    if duration_s <= 0:
        raise DataError("duration must be positive")
    frame_s = frame_ms / 1000.0
    n = n_frames_for_duration(duration_s, frame_ms)
    mid = start_s + (np.arange(n) + 0.5) * frame_s
    onset_times = np.array([t for t, _ in ann.onsets])
    onset_codes = np.array([STATE_INDEX[s] for _, s in ann.onsets])
    idx = np.searchsorted(onset_times, mid, side="right") - 1
    labels = np.where(idx >= 0, onset_codes[np.maximum(idx, 0)], (onset_codes[0] - 1) % 4)
    return StateSequence(labels, frame_s)
