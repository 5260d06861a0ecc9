import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from qcfd.beats import BeatParams, Label, RawBeat, synthesize_beat
from qcfd.dsp import (DspProfile, bandpass_filter, dft, frame_starts, full_profile, hann, idft, morlet_scalogram,
                      preprocess, preprocess_time, scale_frequencies, stft_logmag, to_trimodal)
from qcfd.errors import ParameterError


def naive_dft(x):
    n = len(x)
    out = np.zeros(n, dtype=complex)
    for k in range(n):
        for j in range(n):
            out[k] += x[j] * np.exp(-2j * np.pi * k * j / n)
    return out


def test_dft_impulse_and_constant():
    assert np.allclose(dft([1, 0, 0, 0]), [1, 1, 1, 1], atol=1e-15)
    assert np.allclose(dft([1, 1, 1, 1]), [4, 0, 0, 0], atol=1e-15)


def test_dft_matches_naive_sum(rng):
    x = rng.standard_normal(17) + 1j * rng.standard_normal(17)
    assert np.max(np.abs(dft(x) - naive_dft(x))) < 1e-10


@given(arrays(np.float64, st.integers(1, 64), elements=st.floats(-1e3, 1e3)))
def test_dft_round_trip(x):
    assert np.max(np.abs(idft(dft(x)) - x), initial=0.0) < 1e-10


def test_dft_rejects_empty():
    with pytest.raises(ParameterError):
        dft([])


@pytest.mark.parametrize("window", [4, 16, 64, 256])
def test_hann_constant_overlap_add(window):
    n = 8 * window
    total = np.zeros(n + window)
    for start in range(0, n, window // 2):
        total[start:start + window] += hann(window)
    interior = total[window:n]
    assert np.max(np.abs(interior - 1.0)) < 1e-12


def test_bandpass_zero_in_zero_out():
    assert np.all(bandpass_filter(np.zeros(500), 250, 0.5, 40) == 0)


def test_bandpass_rejects_dc():
    x = np.ones(1024)
    y = bandpass_filter(x, 250, 0.5, 40)
    ratio_db = 10 * np.log10(np.mean(y**2) / np.mean(x**2))
    assert ratio_db <= -40


def test_bandpass_passes_10hz_with_zero_phase():
    fs, n = 250, 2000
    t = np.arange(n) / fs
    x = np.sin(2 * np.pi * 10 * t)
    y = bandpass_filter(x, fs, 0.5, 40)
    mid = slice(500, 1500)
    amp = np.sqrt(2 * np.mean(y[mid] ** 2))
    assert 0.89 <= amp <= 1.0
    lags = np.arange(-10, 11)
    corr = [np.dot(y[mid], np.roll(x, lag)[mid]) for lag in lags]
    assert lags[int(np.argmax(corr))] == 0


@pytest.mark.parametrize("band", [(0.0, 40.0), (40.0, 10.0), (0.5, 125.0)])
def test_bandpass_band_checked(band):
    with pytest.raises(ParameterError):
        bandpass_filter(np.ones(100), 250, *band)


def test_preprocess_time_pads_and_truncates(rng):
    short = rng.standard_normal(200)
    out = preprocess_time(short, 256)
    assert np.all(out[200:] == 0)
    long = rng.standard_normal(300)
    full = preprocess_time(long, 300)
    assert np.array_equal(preprocess_time(long, 256), full[:256])


@given(arrays(np.float64, st.integers(60, 256), elements=st.floats(-5, 5)))
def test_preprocess_time_peak_is_one(x):
    # normalization precedes truncation, so only untruncated beats are pinned
    out = preprocess_time(x, 256)
    peak = np.max(np.abs(out))
    assert peak == 1.0 or peak == 0.0


def test_stft_logmag_zero():
    assert np.all(stft_logmag(np.zeros(256), 64, 32) == 0)


@pytest.mark.parametrize("q", [1, 4, 9, 20, 31])
def test_stft_logmag_bin_alignment(q):
    n = np.arange(256)
    x = np.sin(2 * np.pi * q * n / 64)
    assert int(np.argmax(stft_logmag(x, 64, 32))) == q


def test_stft_frames_satisfy_parseval(rng):
    x = rng.standard_normal(256)
    window = 64
    w = hann(window)
    for s in frame_starts(256, window):
        frame = x[s:s + window] * w
        spec = naive_dft(frame)
        lhs = np.sum(np.abs(spec) ** 2)
        rhs = np.sum(frame**2) * window
        assert abs(lhs - rhs) <= 1e-8 * rhs


@pytest.mark.parametrize("k", [0, 34])
def test_stft_k_range(k):
    with pytest.raises(ParameterError):
        stft_logmag(np.ones(256), 64, k)


def test_scalogram_zero_signal():
    sc = morlet_scalogram(np.zeros(256), 16, 64)
    assert np.all(sc.grid == 0)


@pytest.mark.parametrize("n0", [40, 100, 128, 200])
def test_scalogram_impulse_localized(n0):
    x = np.zeros(256)
    x[n0] = 1.0
    sc = morlet_scalogram(x, 16, 64)
    nearest = int(np.argmin(np.abs(sc.columns - n0)))
    assert all(int(np.argmax(row)) == nearest for row in sc.grid)


@pytest.mark.parametrize("freq", [3.0, 8.0, 15.0, 30.0])
def test_scalogram_sinusoid_row(freq):
    t = np.arange(256) / 250
    sc = morlet_scalogram(np.sin(2 * np.pi * freq * t), 16, 64)
    row = int(np.argmax(np.sum(sc.grid**2, axis=1)))
    assert row == int(np.argmin(np.abs(sc.frequencies - freq)))


def test_scale_frequencies_span_band():
    scales, freqs = scale_frequencies(250, 16)
    assert freqs[0] == pytest.approx(40.0) and freqs[-1] == pytest.approx(1.0)
    assert np.all(np.diff(scales) > 0)


@given(arrays(np.float64, 256, elements=st.floats(-10, 10)))
def test_scalogram_bounded(x):
    grid = morlet_scalogram(x, 16, 64).grid
    assert grid.min() >= 0 and grid.max() <= 1
    assert np.all(stft_logmag(x, 64, 32) >= 0)


def test_to_trimodal_shapes_and_fiducials():
    beat = synthesize_beat(BeatParams(st_offset=0.15), 1)
    sample = to_trimodal(beat)
    assert sample.t.shape == (256,) and sample.f.shape == (32,) and sample.s.shape == (16, 64)
    assert sample.label == Label.ST_SHIFT
    assert sample.qrs_window == beat.qrs_window and sample.st_window == beat.st_window


def test_to_trimodal_zero_beat():
    sample = to_trimodal(RawBeat(np.zeros(256), Label.NORMAL))
    assert not sample.t.any() and not sample.f.any() and not sample.s.any()


def test_preprocess_deterministic_and_matches_single():
    beats = [synthesize_beat(BeatParams(noise_std=0.02), s) for s in range(4)]
    a, b = preprocess(beats), preprocess(beats)
    assert a.t.tobytes() == b.t.tobytes() and a.s.tobytes() == b.s.tobytes()
    single = to_trimodal(beats[2])
    assert np.allclose(single.t, a.t[2], atol=1e-12)
    assert np.allclose(single.s, a.s[2], atol=1e-12)


def test_preprocess_mixed_lengths():
    beats = [RawBeat(np.sin(np.arange(n) / 5.0), Label.NORMAL) for n in (200, 256, 300)]
    data = preprocess(beats)
    for i, beat in enumerate(beats):
        assert np.allclose(data.t[i], preprocess_time(beat, 256), atol=1e-12)


def test_profiles_validate():
    DspProfile().validate()
    full_profile().validate()
    with pytest.raises(ParameterError):
        DspProfile(window=65).validate()
