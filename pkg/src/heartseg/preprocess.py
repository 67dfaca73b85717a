"""The three-filter front end: adaptive Wiener, 30-60 Hz bandpass, wavelet.

Each filter produces one channel; `make_channels` stacks and standardizes
them into the network's input matrix. All three operate on full recordings
at the native 1000 Hz rate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import butter, sosfiltfilt

from . import wavelet
from .errors import ConfigError, DataError
from .signal_io import NATIVE_RATE, Recording

BAND_LOW_HZ = 30.0
BAND_HIGH_HZ = 60.0


@dataclass
class WienerConfig:
    """Windowing for the adaptive Wiener gain rule.

    window_len samples per analysis window, var_segment_len samples per
    sub-segment whose variances estimate the local noise floor, epsilon the
    power floor that keeps the gain defined on silent stretches.
    """

    window_len: int = 500
    var_segment_len: int = 50
    epsilon: float = 1e-10

    def __post_init__(self):
        if self.var_segment_len < 2:
            raise ConfigError("var_segment_len must be at least 2")
        if self.window_len < 2 * self.var_segment_len:
            raise ConfigError("window_len must be at least twice var_segment_len")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")


def adaptive_wiener(x: np.ndarray, cfg: WienerConfig = WienerConfig()) -> np.ndarray:
    """Suppress stationary noise with a per-sub-segment spectral gain.

    Within each non-overlapping window the lower quartile of the
    sub-segment variances estimates the noise power; every sub-segment is
    scaled by clamp(1 - Q1 / power, 0, 1), where power is the sub-segment
    mean square floored at epsilon. Quiet stretches are driven toward zero,
    transient bursts pass nearly unchanged, and scaling the input scales the
    output identically.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DataError("adaptive_wiener expects a one-dimensional signal")
    out = np.empty_like(x)
    n = len(x)
    for a in range(0, n, cfg.window_len):
        b = min(a + cfg.window_len, n)
        bounds = list(range(a, b, cfg.var_segment_len)) + [b]
        segs = [x[bounds[i] : bounds[i + 1]] for i in range(len(bounds) - 1)]
        q1 = np.percentile([np.var(s) for s in segs], 25)
        for lo, s in zip(bounds[:-1], segs):
            power = max(np.mean(s * s), cfg.epsilon)
            gain = min(max(1.0 - q1 / power, 0.0), 1.0)
            out[lo : lo + len(s)] = gain * s
    return out


def bandpass_30_60(x: np.ndarray, sample_rate: int = NATIVE_RATE) -> np.ndarray:
    """Zero-phase 30-60 Hz bandpass (4th-order IIR, forward-backward)."""
    if sample_rate <= 2 * BAND_HIGH_HZ:
        raise ConfigError(
            f"sample rate {sample_rate} too low for a {BAND_HIGH_HZ} Hz passband edge"
        )
    sos = butter(2, [BAND_LOW_HZ, BAND_HIGH_HZ], btype="bandpass", output="sos", fs=sample_rate)
    try:
        return sosfiltfilt(sos, np.asarray(x, dtype=np.float64))
    except ValueError as exc:
        raise DataError(f"signal too short for zero-phase filtering ({exc})") from exc


def wavelet_denoise(x: np.ndarray) -> np.ndarray:
    """Five-level rbio3.9 denoising; see `heartseg.wavelet.denoise`."""
    return wavelet.denoise(x, levels=5, threshold_levels=3)


def make_channels(rec: Recording, wiener_cfg: WienerConfig = WienerConfig()) -> np.ndarray:
    """Build the [3, n] network input: Wiener, bandpass, wavelet channels.

    Each channel is standardized to zero mean and unit variance over the
    recording; a degenerate (near-constant) channel becomes all zeros. The
    recording must already be at the native 1000 Hz rate.
    """
    if rec.sample_rate != NATIVE_RATE:
        raise DataError(
            f"make_channels expects {NATIVE_RATE} Hz input, got {rec.sample_rate} Hz"
        )
    channels = np.stack(
        [
            adaptive_wiener(rec.samples, wiener_cfg),
            bandpass_30_60(rec.samples, rec.sample_rate),
            wavelet_denoise(rec.samples),
        ]
    )
    out = np.zeros_like(channels)
    for i, c in enumerate(channels):
        sd = c.std()
        if sd > 1e-12:
            out[i] = (c - c.mean()) / sd
    return out
