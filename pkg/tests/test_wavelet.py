import numpy as np
import pytest

from heartseg import wavelet as wv
from heartseg.errors import DataError


def test_filters_satisfy_basic_identities():
    assert abs(wv.DEC_LO.sum() - np.sqrt(2)) < 1e-12
    assert abs(wv.REC_LO.sum() - np.sqrt(2)) < 1e-12
    assert abs(wv.DEC_HI.sum()) < 1e-12
    assert abs(wv.REC_HI.sum()) < 1e-12
    # the two high-passes are alternating-sign mirrors of the low-passes
    np.testing.assert_allclose(np.abs(wv.DEC_HI), np.abs(wv.REC_LO[::-1]))
    np.testing.assert_allclose(np.abs(wv.REC_HI), np.abs(wv.DEC_LO[::-1]))


def test_lowpass_biorthogonality():
    """The analysis/synthesis low-passes are duals: even cross-correlation
    lags vanish except the center, which is one."""
    full = np.convolve(wv.DEC_LO, wv.REC_LO)
    center = (len(full) - 1) // 2
    even = full[center % 2 :: 2]
    expected = np.zeros_like(even)
    expected[np.flatnonzero(np.isclose(full[center % 2 :: 2], 1.0))] = 1.0
    np.testing.assert_allclose(even, expected, atol=1e-12)
    assert np.isclose(full[center], 1.0)


@pytest.mark.parametrize("n", [53, 256, 1000, 4096])
@pytest.mark.parametrize("seed", [0, 1])
def test_single_level_perfect_reconstruction(n, seed):
    x = np.random.default_rng(seed).standard_normal(n)
    ca, cd = wv.dwt(x)
    back = wv.idwt(ca, cd, n)
    assert np.max(np.abs(back - x)) / np.max(np.abs(x)) < 1e-12


@pytest.mark.parametrize("levels", [1, 3, 5])
def test_multi_level_perfect_reconstruction(levels):
    x = np.random.default_rng(7).standard_normal(4096)
    ca, details, lengths = wv.wavedec(x, levels)
    assert len(details) == levels and len(lengths) == levels
    back = wv.waverec(ca, details, lengths)
    assert np.max(np.abs(back - x)) / np.max(np.abs(x)) < 1e-8


def test_wavedec_rejects_short_signals():
    with pytest.raises(DataError):
        wv.wavedec(np.zeros(100), levels=5)
    with pytest.raises(DataError):
        wv.wavedec(np.zeros(100), levels=0)


def test_detail_band_annihilates_quadratics():
    """The analysis high-pass has three vanishing moments: away from the
    boundary, detail coefficients of a quadratic signal are zero."""
    n = np.arange(512, dtype=float)
    x = 0.3 + 0.05 * n + 0.002 * n * n
    _, cd = wv.dwt(x)
    interior = cd[20:-20]  # boundary reflections are not polynomial
    assert np.max(np.abs(interior)) < np.max(np.abs(x)) * 1e-12


def test_band_sizes_expand_modestly():
    x = np.zeros(1000)
    ca, cd = wv.dwt(x)
    for band in (ca, cd):
        assert 500 <= len(band) <= 500 + 40


def test_denoise_matches_rethresholding_oracle():
    """denoise == independent thresholding of the same decomposition."""
    rng = np.random.default_rng(3)
    x = np.sin(np.linspace(0, 40 * np.pi, 4000)) + 0.2 * rng.standard_normal(4000)
    out = wv.denoise(x, levels=5, threshold_levels=3)

    ca, details, lengths = wv.wavedec(x, 5)
    thr = np.median([np.abs(d).mean() for d in details])
    kept = [np.where(np.abs(d) < thr, 0.0, d) if j < 3 else d for j, d in enumerate(details)]
    expected = wv.waverec(ca, kept, lengths)
    np.testing.assert_array_equal(out, expected)


def test_denoise_threshold_is_strict(monkeypatch):
    """Coefficients exactly at the threshold survive (strict less-than)."""
    ca = np.zeros(4)
    details = [
        np.array([1.0, -0.5, 2.0]),   # mean |.| = 7/6
        np.array([1.0, -1.0, 1.0]),   # 1.0
        np.array([1.0]),
        np.array([1.0]),
        np.array([1.0]),
    ]
    # median of the per-band means is exactly 1.0
    captured = {}
    monkeypatch.setattr(
        wv, "wavedec", lambda x, levels: (ca, [d.copy() for d in details], [3] * 5)
    )

    def fake_waverec(ca_in, kept, lengths):
        captured["kept"] = kept
        return np.zeros(3)

    monkeypatch.setattr(wv, "waverec", fake_waverec)
    wv.denoise(np.zeros(2000), levels=5, threshold_levels=3)
    kept = captured["kept"]
    np.testing.assert_array_equal(kept[0], [1.0, 0.0, 2.0])  # only 0.5 falls
    np.testing.assert_array_equal(kept[1], details[1])       # exact ties survive
    np.testing.assert_array_equal(kept[2], details[2])


def test_denoise_reduces_noise_keeps_signal():
    rng = np.random.default_rng(11)
    t = np.arange(6000) / 1000.0
    clean = np.sin(2 * np.pi * 45.0 * t)
    noisy = clean + 0.4 * rng.standard_normal(len(t))
    out = wv.denoise(noisy)
    assert len(out) == len(noisy)
    err_before = np.mean((noisy - clean) ** 2)
    err_after = np.mean((out - clean) ** 2)
    assert err_after < err_before


def test_denoise_zero_input_is_zero():
    np.testing.assert_array_equal(wv.denoise(np.zeros(2000)), np.zeros(2000))
