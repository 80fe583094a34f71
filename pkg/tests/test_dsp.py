import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from plaae.dsp import (
    LOG_FLOOR,
    AudioBuffer,
    MelConfig,
    StftConfig,
    average_pool_resample,
    causal_pad,
    hann_window,
    hz_to_mel,
    mel_filterbank,
    mel_spectrogram,
    mel_to_hz,
    stft,
)
from plaae.errors import ConfigError, LengthError


def test_audio_buffer_validation():
    with pytest.raises(ValueError):
        AudioBuffer(np.array([0.0, 1.5]))
    with pytest.raises(ConfigError):
        AudioBuffer(np.zeros(3), sample_rate=0)
    with pytest.raises(LengthError):
        AudioBuffer(np.zeros((2, 3)))
    assert AudioBuffer(np.zeros(8000)).duration == 0.5


def test_hann_window_shape_and_closed_form():
    w = hann_window(320)
    assert w[0] == 0.0
    assert w[160] == 1.0
    np.testing.assert_allclose(w[1:], w[1:][::-1], atol=1e-15)
    for n in (1, 37, 100, 211, 319):
        assert w[n] == pytest.approx(0.5 - 0.5 * np.cos(2 * np.pi * n / 320), abs=1e-15)


def test_stft_shape_and_zero_input():
    X = stft(np.zeros(1600))
    assert X.shape == (513, (1600 - 320) // 160 + 1)
    assert np.all(np.abs(X) == 0)


def test_stft_too_short_raises():
    with pytest.raises(LengthError):
        stft(np.zeros(319))


def test_stft_sine_peaks_at_expected_bin():
    t = np.arange(4000) / 16000
    X = np.abs(stft(np.sin(2 * np.pi * 1000 * t)))
    assert np.all(X.argmax(axis=0) == 64)


def test_stft_parseval_per_frame(rng):
    x = rng.standard_normal(2000)
    cfg = StftConfig()
    X = stft(x, cfg)
    w = hann_window(cfg.window_length)
    for t in range(X.shape[1]):
        frame = x[t * 160 : t * 160 + 320] * w
        # one-sided spectrum: interior bins count twice
        full = np.abs(X[0, t]) ** 2 + np.abs(X[-1, t]) ** 2 + 2 * np.sum(np.abs(X[1:-1, t]) ** 2)
        assert np.sum(frame**2) == pytest.approx(full / cfg.fft_size, rel=1e-10)


@given(a=st.floats(-10, 10), seed=st.integers(0, 999))
def test_stft_linearity(a, seed):
    x = np.random.default_rng(seed).standard_normal(800)
    np.testing.assert_allclose(stft(a * x), a * stft(x), atol=1e-12 * max(1.0, abs(a)) * 50)


def test_mel_zero_signal_gives_floor():
    m = mel_spectrogram(np.zeros(1600))
    assert m.shape == (80, 9)
    np.testing.assert_array_equal(m, np.log(LOG_FLOOR))


def test_mel_is_deterministic(rng):
    x = rng.uniform(-1, 1, 4800)
    assert np.array_equal(mel_spectrogram(x), mel_spectrogram(x.copy()))


def test_mel_sine_argmax_matches_brute_force():
    t = np.arange(3200) / 16000
    x = 0.5 * np.sin(2 * np.pi * 440 * t)
    # independent filterbank built bin by bin
    mel_pts = np.linspace(0, 2595 * np.log10(1 + 8000 / 700), 82)
    hz = 700 * (10 ** (mel_pts / 2595) - 1)
    fb = np.zeros((80, 513))
    for m in range(80):
        for k in range(513):
            f = k * 16000 / 1024
            if hz[m] < f <= hz[m + 1]:
                fb[m, k] = (f - hz[m]) / (hz[m + 1] - hz[m])
            elif hz[m + 1] < f < hz[m + 2]:
                fb[m, k] = (hz[m + 2] - f) / (hz[m + 2] - hz[m + 1])
    w = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(320) / 320)
    power = np.abs(np.fft.rfft(x[:320] * w, 1024)) ** 2
    assert mel_spectrogram(x)[:, 0].argmax() == np.argmax(fb @ power)


def test_filterbank_coverage_and_unimodality():
    fb = mel_filterbank(MelConfig())
    assert np.all(fb >= 0)
    assert np.all(fb.sum(axis=0)[1:-1] > 0)
    for row in fb:
        nz = row[row > 0]
        peak = nz.argmax()
        assert np.all(np.diff(nz[: peak + 1]) >= 0) and np.all(np.diff(nz[peak:]) <= 0)


def test_mel_scale_round_trip():
    f = np.array([0.0, 100.0, 1000.0, 8000.0])
    np.testing.assert_allclose(mel_to_hz(hz_to_mel(f)), f, atol=1e-9)


def test_causal_pad_aligns_frames_to_hop():
    x = np.zeros(1600)
    x[1000] = 0.5
    m = mel_spectrogram(x, pad_left=causal_pad())
    assert m.shape[1] == 10
    # frame t ends at sample (t+1)*160, so samples past 1000 first show up in frame 6
    assert np.all(m[:, :6] == np.log(LOG_FLOOR))
    assert np.any(m[:, 6] > np.log(LOG_FLOOR))


def test_pool_examples():
    c = average_pool_resample(AudioBuffer(np.full(64, 0.3)), 4)
    np.testing.assert_allclose(c.samples, 0.3)
    assert c.sample_rate == 4000
    np.testing.assert_array_equal(average_pool_resample(np.array([1.0, -1.0, 1.0, -1.0]), 4).samples, [0.0])
    with pytest.raises(ConfigError):
        average_pool_resample(np.zeros(4), 0)


@given(n=st.integers(1, 200), factor=st.sampled_from([1, 4, 16]), seed=st.integers(0, 9999))
def test_pool_matches_block_means_and_preserves_mean(n, factor, seed):
    x = np.random.default_rng(seed).uniform(-1, 1, n)
    y = average_pool_resample(x, factor).samples
    k = n // factor
    assert y.shape == (k,)
    for i in range(k):
        assert y[i] == pytest.approx(np.mean(x[i * factor : (i + 1) * factor]), abs=1e-15)
    if k:
        assert y.mean() == pytest.approx(x[: k * factor].mean(), abs=1e-12)
