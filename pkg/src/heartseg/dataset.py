"""Difficulty indicators, level stratification, and synthetic corpora.

Recordings are graded by two axes: a noise/murmur power ratio and a
rhythm/rate irregularity sum. The same indicator code drives both the
stratifier and the synthetic generator, which rejection-samples until each
generated recording actually lands in its intended difficulty level.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import butter, sosfilt

from . import signal_io
from .errors import ConfigError, DataError, FormatError
from .signal_io import NATIVE_RATE, STATE_INDEX, STATES, Annotation, Recording

LEVEL_I = "LEVEL_I"
LEVEL_II = "LEVEL_II"
LEVEL_III = "LEVEL_III"
LEVELS = (LEVEL_I, LEVEL_II, LEVEL_III)


@dataclass
class Indicators:
    """Per-recording difficulty measures.

    Powers are mean-square amplitudes over each state's samples; the ratios
    and the two timing measures (seconds) are what the level rules read.
    """

    w_total: float
    w_s1: float
    w_sys: float
    w_s2: float
    w_dia: float
    f_s2: float
    d_noise_murmur: float
    d_rhythm: float
    d_rate: float


def _sample_states(ann: Annotation, n_samples: int, sample_rate: int) -> np.ndarray:
    """State code of every sample; samples before the first onset take the
    cyclically preceding state."""
    t = np.arange(n_samples) / sample_rate
    onset_times = np.array([x for x, _ in ann.onsets])
    onset_codes = np.array([STATE_INDEX[s] for _, s in ann.onsets])
    idx = np.searchsorted(onset_times, t, side="right") - 1
    return np.where(idx >= 0, onset_codes[np.maximum(idx, 0)], (onset_codes[0] - 1) % 4)


def compute_indicators(rec: Recording, ann: Annotation) -> Indicators:
    """Power ratios and timing irregularity for one annotated recording.

    The rhythm measure is the root mean square deviation of the S1-onset
    intervals from their mean (the divisor equals the interval count); the
    rate measure is the distance of the mean interval from the 0.6..1.2 s
    normal band, zero inside it.
    """
    ann.validate()
    y = rec.samples
    if y.size == 0:
        raise DataError("empty recording")
    codes = _sample_states(ann, len(y), rec.sample_rate)
    sq = y * y
    powers = []
    for code, state in enumerate(STATES):
        mask = codes == code
        if not mask.any():
            raise DataError(f"annotation leaves no samples in state {state!r}")
        powers.append(float(sq[mask].mean()))
    w_s1, w_sys, w_s2, w_dia = powers
    if w_dia == 0.0 or w_s1 + w_s2 == 0.0:
        raise DataError("silent reference regions make the power ratios undefined")

    s1_times = ann.times("S1")
    if len(s1_times) < 2:
        raise DataError("need at least 2 S1 onsets to measure rhythm and rate")
    ss = np.diff(s1_times)
    e_ss = float(ss.mean())
    d_rhythm = math.sqrt(float(np.mean((ss - e_ss) ** 2)))
    # Distance from the normal band, written so the inside is exactly 0.0
    # (the abnormal-rate flag tests d_rate > 0).
    d_rate = max(0.0, e_ss - 1.2) + max(0.0, 0.6 - e_ss)

    return Indicators(
        w_total=float(sq.mean()),
        w_s1=w_s1,
        w_sys=w_sys,
        w_s2=w_s2,
        w_dia=w_dia,
        f_s2=w_s2 / w_dia,
        d_noise_murmur=(w_sys + w_dia) / (w_s1 + w_s2),
        d_rhythm=d_rhythm,
        d_rate=d_rate,
    )


#: Level-rule thresholds: noise/murmur ratio above `noise_high` with combined
#: rhythm+rate above `rhythm_rate` is the hard stratum; ratio at most
#: `noise_clean` with rhythm+rate in bounds is the easy one.
NOISE_HIGH_THRESHOLD = 0.8
NOISE_CLEAN_THRESHOLD = 0.3
RHYTHM_RATE_THRESHOLD = 0.2


def assign_level(
    ind: Indicators,
    noise_high: float = NOISE_HIGH_THRESHOLD,
    noise_clean: float = NOISE_CLEAN_THRESHOLD,
    rhythm_rate: float = RHYTHM_RATE_THRESHOLD,
) -> str:
    """Map indicators to LEVEL_I / LEVEL_II / LEVEL_III.

    Both axes bad gives III; noise/murmur in the clean band with calm
    rhythm+rate gives I; everything else is II. Total on all inputs.
    """
    rr = ind.d_rhythm + ind.d_rate
    if ind.d_noise_murmur > noise_high and rr > rhythm_rate:
        return LEVEL_III
    if ind.d_noise_murmur <= noise_clean and rr <= rhythm_rate:
        return LEVEL_I
    return LEVEL_II


@dataclass
class Characteristics:
    """Per-recording boolean flags, with the indicators they were read from."""

    high_noise_murmur: bool
    arrhythmia: bool
    abnormal_hr: bool
    vague_s2: bool
    indicators: Indicators

    FLAG_NAMES = ("high_noise_murmur", "arrhythmia", "abnormal_hr", "vague_s2")


def characterize(rec: Recording, ann: Annotation) -> Characteristics:
    """Flag heavy noise/murmur, arrhythmia, abnormal rate, and a vague S2.

    An S2 is "vague" when its power fails to stand at least a factor of two
    above the diastolic floor.
    """
    ind = compute_indicators(rec, ann)
    return Characteristics(
        high_noise_murmur=ind.d_noise_murmur > 0.8,
        arrhythmia=ind.d_rhythm > 0.12,
        abnormal_hr=ind.d_rate > 0.0,
        vague_s2=ind.f_s2 <= 2.0,
        indicators=ind,
    )


# ---------------------------------------------------------------------------
# synthesis

S1_DURATION_S = 0.12
S2_DURATION_S = 0.10
TONE_HZ = 45.0
SYSTOLE_FRACTION = 0.4   # S2 onset sits at this fraction of the beat interval
MURMUR_BAND_HZ = (40.0, 150.0)
LEAD_IN_S = 0.2


@dataclass
class SynthConfig:
    """Knobs for one synthetic recording; every draw derives from `seed`."""

    heart_rate_bpm: float = 70.0
    rhythm_jitter_s: float = 0.0
    noise_snr_db: float = 30.0
    murmur_level: float = 0.0    # target (systole+diastole)/(S1+S2) power ratio
    s2_gain: float = 0.9
    duration_s: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.duration_s < 10.0:
            raise ConfigError("duration_s must be at least 10 seconds")
        if self.heart_rate_bpm <= 0:
            raise ConfigError("heart_rate_bpm must be positive")
        if self.rhythm_jitter_s < 0:
            raise ConfigError("rhythm_jitter_s must be non-negative")
        if self.murmur_level < 0:
            raise ConfigError("murmur_level must be non-negative")
        if self.s2_gain <= 0:
            raise ConfigError("s2_gain must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")


def _tone(fs: int, duration_s: float, freq_hz: float) -> np.ndarray:
    """Gaussian-enveloped sinusoid, the shared S1/S2 morphology."""
    n = int(round(duration_s * fs))
    tau = np.arange(n) / fs
    envelope = np.exp(-0.5 * ((tau - duration_s / 2.0) / (duration_s / 6.0)) ** 2)
    return envelope * np.sin(2.0 * np.pi * freq_hz * tau)


# Beats shorter than this cannot hold both sounds plus nonempty gaps.
_MIN_INTERVAL_S = 0.35


def synth_pcg(cfg: SynthConfig) -> tuple:
    """Render one annotated phonocardiogram at the pipeline's native rate.

    Each beat places an S1 tone, a gap, an S2 tone at a fixed fraction of
    the (jittered) interval, then diastole until the next beat. Murmur is
    band-limited noise confined to the gap states and scaled so the
    gap-to-sound power ratio hits murmur_level; white noise is added last at
    noise_snr_db. Returns (Recording, Annotation) with exact onsets.
    """
    fs = NATIVE_RATE
    base = 60.0 / cfg.heart_rate_bpm
    if base * SYSTOLE_FRACTION <= S1_DURATION_S or base < _MIN_INTERVAL_S:
        raise DataError(
            f"heart rate {cfg.heart_rate_bpm} bpm leaves no room for the sounds "
            f"(beat interval {base:.3f} s)"
        )
    rng = np.random.default_rng(cfg.seed)
    n = int(round(cfg.duration_s * fs))

    onsets = []
    t = LEAD_IN_S
    while True:
        interval = base + (rng.normal(0.0, cfg.rhythm_jitter_s) if cfg.rhythm_jitter_s else 0.0)
        interval = max(interval, _MIN_INTERVAL_S)
        s2_onset = t + SYSTOLE_FRACTION * interval
        dia_onset = s2_onset + S2_DURATION_S
        if dia_onset + 0.05 > cfg.duration_s:
            break
        onsets += [
            (t, "S1"),
            (t + S1_DURATION_S, "systole"),
            (s2_onset, "S2"),
            (dia_onset, "diastole"),
        ]
        t += interval
    ann = Annotation(onsets)
    ann.validate()
    if len(ann.times("S1")) < 2:
        raise DataError("duration too short for two beats at this heart rate")

    y = np.zeros(n)
    s1 = _tone(fs, S1_DURATION_S, TONE_HZ)
    s2 = cfg.s2_gain * _tone(fs, S2_DURATION_S, TONE_HZ)
    for onset_t, state in onsets:
        if state not in ("S1", "S2"):
            continue
        tone = s1 if state == "S1" else s2
        i0 = int(round(onset_t * fs))
        seg = tone[: max(0, min(len(tone), n - i0))]
        y[i0 : i0 + len(seg)] += seg

    codes = _sample_states(ann, n, fs)
    heart_mask = (codes == STATE_INDEX["S1"]) | (codes == STATE_INDEX["S2"])
    gap_mask = ~heart_mask
    p_heart = float((y[heart_mask] ** 2).mean())

    if cfg.murmur_level > 0:
        sos = butter(4, MURMUR_BAND_HZ, btype="bandpass", fs=fs, output="sos")
        murmur = sosfilt(sos, rng.standard_normal(n))
        ramp = np.hanning(41)
        ramp /= ramp.sum()
        soft_mask = np.convolve(gap_mask.astype(float), ramp, mode="same")
        murmur *= soft_mask
        p_gap = float((murmur[gap_mask] ** 2).mean())
        if p_gap > 0:
            murmur *= math.sqrt(cfg.murmur_level * p_heart / p_gap)
        y = y + murmur

    p_signal = float((y**2).mean())
    noise_power = p_signal / (10.0 ** (cfg.noise_snr_db / 10.0))
    y = y + rng.normal(0.0, math.sqrt(noise_power), n)

    peak = float(np.max(np.abs(y)))
    if peak > 0:
        y *= 0.9 / peak
    return Recording(y, fs), ann


# ---------------------------------------------------------------------------
# corpus construction


@dataclass
class CorpusItem:
    recording: Recording
    annotation: Annotation
    config: SynthConfig
    level: str
    indicators: Indicators


def _draw_config(level: str, rng: np.random.Generator, index: int, seed: int, duration_s: float):
    """Per-level parameter ranges aimed comfortably inside each region."""
    if level == LEVEL_I:
        return SynthConfig(
            heart_rate_bpm=rng.uniform(55.0, 95.0),
            rhythm_jitter_s=rng.uniform(0.0, 0.015),
            noise_snr_db=rng.uniform(25.0, 35.0),
            murmur_level=rng.uniform(0.02, 0.12),
            s2_gain=rng.uniform(0.75, 1.0),
            duration_s=duration_s,
            seed=seed,
        )
    if level == LEVEL_II:
        if index % 2 == 0:
            # moderate murmur, steady rhythm
            return SynthConfig(
                heart_rate_bpm=rng.uniform(55.0, 95.0),
                rhythm_jitter_s=rng.uniform(0.0, 0.015),
                noise_snr_db=rng.uniform(20.0, 30.0),
                murmur_level=rng.uniform(0.45, 0.7),
                s2_gain=rng.uniform(0.75, 1.0),
                duration_s=duration_s,
                seed=seed,
            )
        # clean signal, bradycardic and slightly irregular
        return SynthConfig(
            heart_rate_bpm=rng.uniform(38.0, 44.0),
            rhythm_jitter_s=rng.uniform(0.05, 0.1),
            noise_snr_db=rng.uniform(25.0, 35.0),
            murmur_level=rng.uniform(0.02, 0.12),
            s2_gain=rng.uniform(0.75, 1.0),
            duration_s=duration_s,
            seed=seed,
        )
    if level == LEVEL_III:
        return SynthConfig(
            heart_rate_bpm=rng.uniform(40.0, 46.0),
            rhythm_jitter_s=rng.uniform(0.15, 0.22),
            noise_snr_db=rng.uniform(10.0, 18.0),
            murmur_level=rng.uniform(1.0, 1.6),
            s2_gain=rng.uniform(0.75, 1.0),
            duration_s=duration_s,
            seed=seed,
        )
    raise ConfigError(f"unknown level {level!r}")


_MAX_ATTEMPTS = 30


def build_level_corpus(n_per_level, seed: int, duration_s: float = 10.0) -> dict:
    """Synthesize verified recordings for each level.

    n_per_level: one count for all levels, or a sequence of three. Each
    recording is re-drawn (bounded retries) until its measured indicators
    map back to the intended level, so the labels are true by construction.
    Returns {level: [CorpusItem, ...]}.
    """
    if isinstance(n_per_level, int):
        counts = (n_per_level,) * 3
    else:
        counts = tuple(int(c) for c in n_per_level)
        if len(counts) != 3:
            raise ConfigError("n_per_level must be one integer or three")
    if any(c < 0 for c in counts) or sum(counts) == 0:
        raise ConfigError("recording counts must be non-negative and not all zero")

    corpus = {level: [] for level in LEVELS}
    for level_i, (level, count) in enumerate(zip(LEVELS, counts)):
        for j in range(count):
            for attempt in range(_MAX_ATTEMPTS):
                entropy = [int(seed), level_i, j, attempt]
                rec_seed = int(np.random.SeedSequence(entropy + [0]).generate_state(1)[0])
                draw_rng = np.random.default_rng(np.random.SeedSequence(entropy + [1]))
                cfg = _draw_config(level, draw_rng, j, rec_seed, duration_s)
                rec, ann = synth_pcg(cfg)
                ind = compute_indicators(rec, ann)
                if assign_level(ind) == level:
                    corpus[level].append(CorpusItem(rec, ann, cfg, level, ind))
                    break
            else:
                raise DataError(
                    f"could not generate a {level} recording after {_MAX_ATTEMPTS} attempts"
                )
    return corpus


MANIFEST_COLUMNS = [
    "path",
    "annotation",
    "level",
    "seed",
    "heart_rate_bpm",
    "rhythm_jitter_s",
    "noise_snr_db",
    "murmur_level",
    "s2_gain",
    "duration_s",
]


def write_corpus(corpus: dict, out_dir) -> Path:
    """Write WAV + annotation pairs and a manifest CSV; returns its path.

    File names are level-prefixed and zero-padded; manifest paths are
    relative to the manifest's own directory. Floats are written with repr
    so identical corpora produce identical bytes.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for level in LEVELS:
        for j, item in enumerate(corpus.get(level, [])):
            stem = f"{level.lower()}_{j:03d}"
            signal_io.write_wav(item.recording, out / f"{stem}.wav")
            signal_io.write_annotation(item.annotation, out / f"{stem}.csv")
            cfg = item.config
            rows.append(
                [
                    f"{stem}.wav",
                    f"{stem}.csv",
                    level,
                    str(cfg.seed),
                    repr(cfg.heart_rate_bpm),
                    repr(cfg.rhythm_jitter_s),
                    repr(cfg.noise_snr_db),
                    repr(cfg.murmur_level),
                    repr(cfg.s2_gain),
                    repr(cfg.duration_s),
                ]
            )
    manifest = out / "manifest.csv"
    with open(manifest, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_COLUMNS)
        writer.writerows(rows)
    return manifest


def read_manifest(path) -> list:
    """Manifest rows as dicts; requires at least path and annotation columns."""
    path = Path(path)
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise FormatError(f"{path}: empty manifest")
        missing = {"path", "annotation"} - set(reader.fieldnames)
        if missing:
            raise FormatError(f"{path}: manifest lacks columns {sorted(missing)}")
        for row in reader:
            rows.append(row)
    return rows


def load_manifest_pairs(path) -> list:
    """(name, Recording, Annotation, level-or-None) per manifest row, in order."""
    path = Path(path)
    out = []
    for row in read_manifest(path):
        wav = path.parent / row["path"]
        ann = path.parent / row["annotation"]
        out.append(
            (
                Path(row["path"]).stem,
                signal_io.load_wav(wav),
                signal_io.read_annotation(ann),
                row.get("level") or None,
            )
        )
    return out
