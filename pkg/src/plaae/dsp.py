"""Signal front-end: Hann windows, STFT, log-mel features and pooling resamplers."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import HOP_LENGTH, SAMPLE_RATE
from .errors import ConfigError, LengthError

LOG_FLOOR = 1e-5


@dataclass(frozen=True)
class AudioBuffer:
    """Mono waveform in [-1, 1] at ``sample_rate`` Hz."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1:
            raise LengthError(f"AudioBuffer expects 1-D samples, got shape {s.shape}")
        if self.sample_rate <= 0:
            raise ConfigError(f"sample_rate must be positive, got {self.sample_rate}")
        if s.size and not np.all(np.isfinite(s)):
            raise ValueError("AudioBuffer samples must be finite")
        if s.size and np.max(np.abs(s)) > 1.0:
            raise ValueError(f"AudioBuffer samples exceed [-1, 1] (peak {np.max(np.abs(s)):.4f})")
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self):
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class StftConfig:
    fft_size: int = 1024
    window_length: int = 320
    hop_length: int = HOP_LENGTH

    def __post_init__(self):
        if self.window_length > self.fft_size:
            raise ConfigError("window_length must not exceed fft_size")
        if self.hop_length < 1 or self.window_length < 1:
            raise ConfigError("hop_length and window_length must be positive")

    @property
    def n_bins(self):
        return self.fft_size // 2 + 1


@dataclass(frozen=True)
class MelConfig:
    n_mels: int = 80
    f_min: float = 0.0
    f_max: float = 8000.0
    sample_rate: int = SAMPLE_RATE
    stft: StftConfig = field(default_factory=StftConfig)
    log_floor: float = LOG_FLOOR

    def __post_init__(self):
        if not 0 <= self.f_min < self.f_max <= self.sample_rate / 2:
            raise ConfigError(f"need 0 <= f_min < f_max <= Nyquist, got {self.f_min}, {self.f_max}")


def hann_window(length):
    """Periodic Hann window, ``0.5 - 0.5 cos(2 pi n / L)``; ``w[0] == 0`` and ``w[L/2] == 1``."""
    n = np.arange(length)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / length)


def _samples(audio):
    return audio.samples if isinstance(audio, AudioBuffer) else np.asarray(audio, dtype=np.float64)


def frame_count(n_samples, window_length, hop_length):
    if n_samples < window_length:
        return 0
    return (n_samples - window_length) // hop_length + 1


def stft(audio, cfg: StftConfig = StftConfig()):
    """Complex spectrogram ``[fft_size//2+1, frames]``.

    Frame ``t`` covers ``[t*hop, t*hop + window_length)`` and is zero-padded
    to ``fft_size`` after windowing.
    """
    x = _samples(audio)
    if x.shape[0] < cfg.window_length:
        raise LengthError(f"signal of {x.shape[0]} samples is shorter than one {cfg.window_length}-sample window")
    n = frame_count(x.shape[0], cfg.window_length, cfg.hop_length)
    idx = cfg.hop_length * np.arange(n)[:, None] + np.arange(cfg.window_length)[None, :]
    frames = x[idx] * hann_window(cfg.window_length)
    return np.fft.rfft(frames, n=cfg.fft_size, axis=1).T


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=8)
def _filterbank(n_mels, f_min, f_max, sample_rate, fft_size):
    edges = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))
    freqs = np.arange(fft_size // 2 + 1) * sample_rate / fft_size
    lo, center, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lo) / (center - lo)
    falling = (hi - freqs[None, :]) / (hi - center)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    fb.setflags(write=False)
    return fb


def mel_filterbank(cfg: MelConfig = MelConfig()):
    """Triangular filters ``[n_mels, n_bins]`` with unit peaks on the mel scale."""
    return _filterbank(cfg.n_mels, cfg.f_min, cfg.f_max, cfg.sample_rate, cfg.stft.fft_size)


def mel_spectrogram(audio, cfg: MelConfig = MelConfig(), pad_left=0):
    """``log(mel_power + floor)`` as an ``[n_mels, frames]`` array.

    ``pad_left`` zeros are prepended before framing; the model front-end uses
    ``window - hop`` so that frame ``t`` ends exactly at sample ``(t+1)*hop``.
    """
    x = _samples(audio)
    if pad_left:
        x = np.concatenate([np.zeros(pad_left), x])
    power = np.abs(stft(x, cfg.stft)) ** 2
    return np.log(mel_filterbank(cfg) @ power + cfg.log_floor)


def causal_pad(cfg: StftConfig = StftConfig()):
    """Left padding that aligns each analysis window to end on a hop boundary."""
    return cfg.window_length - cfg.hop_length


def average_pool_resample(audio, factor):
    """Downsample by non-overlapping block means; a tail shorter than ``factor`` is dropped."""
    if factor < 1:
        raise ConfigError(f"pooling factor must be >= 1, got {factor}")
    x = _samples(audio)
    n = x.shape[0] // factor
    pooled = x[: n * factor].reshape(n, factor).mean(axis=1)
    rate = audio.sample_rate if isinstance(audio, AudioBuffer) else SAMPLE_RATE
    return AudioBuffer(pooled, rate / factor if rate % factor else rate // factor)
