"""16-bit PCM mono WAV I/O on top of the stdlib ``wave`` module."""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

from . import SAMPLE_RATE
from .dsp import AudioBuffer
from .errors import AudioFormatError

FULL_SCALE = 32768.0


def dequantize(pcm):
    return np.asarray(pcm, dtype=np.int16).astype(np.float64) / FULL_SCALE


def quantize(samples):
    """Round half away from zero, then clamp to the int16 range."""
    x = np.asarray(samples, dtype=np.float64) * FULL_SCALE
    q = np.sign(x) * np.floor(np.abs(x) + 0.5)
    return np.clip(q, -32768, 32767).astype(np.int16)


def read_wav(path, expected_rate=SAMPLE_RATE) -> AudioBuffer:
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as w:
            channels, width, rate, n = w.getnchannels(), w.getsampwidth(), w.getframerate(), w.getnframes()
            raw = w.readframes(n)
    except (wave.Error, EOFError) as exc:
        raise AudioFormatError(f"{path}: not a PCM WAV file ({exc})") from exc
    if channels != 1:
        raise AudioFormatError(f"{path}: {channels} channels, only mono is supported")
    if width != 2:
        raise AudioFormatError(f"{path}: {8 * width}-bit samples, only 16-bit PCM is supported")
    if expected_rate is not None and rate != expected_rate:
        raise AudioFormatError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz (resample externally)")
    return AudioBuffer(dequantize(np.frombuffer(raw, dtype="<i2")), rate)


def write_wav(path, audio):
    samples = audio.samples if isinstance(audio, AudioBuffer) else np.asarray(audio, dtype=np.float64)
    rate = audio.sample_rate if isinstance(audio, AudioBuffer) else SAMPLE_RATE
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(rate)
        w.writeframes(quantize(samples).astype("<i2").tobytes())
