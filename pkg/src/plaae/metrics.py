"""Objective evaluation: mel-cepstral distortion, F0 RMSE, voicing error, confidence intervals."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import butter, sosfiltfilt

from . import SAMPLE_RATE
from .dsp import AudioBuffer, MelConfig, mel_spectrogram
from .errors import LengthError

MCD_CONSTANT = 10.0 * math.sqrt(2.0) / math.log(10.0)
N_CEPSTRA = 13

F0_FRAME = 400  # 25 ms
F0_HOP = 160  # 10 ms
F0_MIN, F0_MAX = 60.0, 400.0
VOICING_THRESHOLD = 0.45
SILENCE_RMS = 1e-4
_REFINE_CUTOFF = 1000.0
_OCTAVE_TOLERANCE = 0.9


def _samples(x):
    return x.samples if isinstance(x, AudioBuffer) else np.asarray(x, dtype=np.float64)


# -- mel cepstral distortion ---------------------------------------------------

def dct_matrix(n):
    """Orthonormal DCT-II as an ``[n, n]`` matrix acting on column vectors."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    m = np.sqrt(2.0 / n) * np.cos(np.pi * k * (2 * i + 1) / (2 * n))
    m[0] /= np.sqrt(2.0)
    return m


def mel_cepstra(segment, mel=MelConfig(), n_coeffs=N_CEPSTRA):
    """Coefficients ``1..n_coeffs`` of the DCT of the log-mel spectrum, ``[n_coeffs, frames]``."""
    logmel = mel_spectrogram(segment, mel)
    return (dct_matrix(mel.n_mels) @ logmel)[1 : n_coeffs + 1]


def mcd_curve(ref, rec, horizon_ms=120, start=0, mel=MelConfig(), n_coeffs=N_CEPSTRA):
    """MCD in dB for every 10 ms block of ``[start, start + horizon)``.

    The value at offset ``k`` uses the analysis window that ends with block
    ``k`` (it also sees the preceding 10 ms, zero-padded before sample 0).
    """
    a, b = _samples(ref), _samples(rec)
    if a.shape != b.shape:
        raise LengthError(f"reference and reconstruction lengths differ: {a.shape[0]} vs {b.shape[0]}")
    hop = mel.stft.hop_length
    lead = mel.stft.window_length - hop
    n = int(round(horizon_ms * mel.sample_rate / 1000))
    if n % hop:
        raise LengthError(f"horizon of {horizon_ms} ms is not a multiple of the {hop}-sample hop")
    if start < 0 or a.shape[0] - start < n:
        raise LengthError(f"need {n} samples from offset {start}, signal has {a.shape[0]}")

    def window(x):
        seg = x[max(0, start - lead) : start + n]
        return np.concatenate([np.zeros(n + lead - seg.shape[0]), seg])

    diff = mel_cepstra(window(a), mel, n_coeffs) - mel_cepstra(window(b), mel, n_coeffs)
    return MCD_CONSTANT * np.sqrt((diff * diff).sum(axis=0))


# -- F0 and voicing ------------------------------------------------------------

@dataclass(frozen=True)
class F0Track:
    f0: np.ndarray  # Hz, 0.0 where unvoiced
    voiced: np.ndarray
    hop: int = F0_HOP
    sample_rate: int = SAMPLE_RATE

    def __len__(self):
        return self.f0.shape[0]

    @property
    def times(self):
        return (np.arange(len(self)) * self.hop + F0_FRAME / 2) / self.sample_rate


def _nccf(frame, max_lag):
    """Normalized cross-correlation of a frame with itself over lags ``0..max_lag``."""
    N = frame.shape[0]
    nfft = 1 << int(np.ceil(np.log2(2 * N)))
    spec = np.fft.rfft(frame, nfft)
    ac = np.fft.irfft(spec.real**2 + spec.imag**2, nfft)[: max_lag + 1]
    cs = np.concatenate([[0.0], np.cumsum(frame * frame)])
    tau = np.arange(max_lag + 1)
    energy = cs[N - tau] * (cs[N] - cs[tau])
    return np.where(energy > 0, ac / np.sqrt(np.where(energy > 0, energy, 1.0)), 0.0)


def _parabolic(r, t):
    """Vertex of the parabola through ``r[t-1:t+2]``; ``t`` itself unless it is a strict local peak."""
    a, b, c = r[t - 1], r[t], r[t + 1]
    den = a - 2.0 * b + c
    if not (b >= a and b >= c and den < 0):
        return float(t)
    return t + 0.5 * (a - c) / den


def estimate_f0(audio, sample_rate=SAMPLE_RATE, f0_min=F0_MIN, f0_max=F0_MAX,
                threshold=VOICING_THRESHOLD, frame_length=F0_FRAME, hop=F0_HOP):
    """Normalized-autocorrelation pitch tracker on 25 ms frames every 10 ms.

    A frame is voiced when its strongest normalized autocorrelation peak in
    the lag range of ``[f0_min, f0_max]`` reaches ``threshold``.  Among peaks
    within 10% of the strongest, the shortest lag wins (guards against
    period doubling).  The lag is then refined with parabolic interpolation
    on a 1 kHz low-passed copy of the signal.
    """
    x = _samples(audio)
    n_frames = (x.shape[0] - frame_length) // hop + 1 if x.shape[0] >= frame_length else 0
    if n_frames < 1:
        raise LengthError(f"signal of {x.shape[0]} samples is shorter than one {frame_length}-sample F0 frame")
    lag_min = int(np.floor(sample_rate / f0_max))
    lag_max = min(int(np.ceil(sample_rate / f0_min)), frame_length - 2)
    smooth = sosfiltfilt(butter(4, _REFINE_CUTOFF, fs=sample_rate, output="sos"), x)

    f0 = np.zeros(n_frames)
    voiced = np.zeros(n_frames, dtype=bool)
    for i in range(n_frames):
        frame = x[i * hop : i * hop + frame_length]
        frame = frame - frame.mean()
        if np.sqrt(np.mean(frame * frame)) < SILENCE_RMS:
            continue
        r = _nccf(frame, lag_max + 1)
        seg = r[lag_min : lag_max + 1]
        best = seg.max()
        if best < threshold:
            continue
        interior = (r[lag_min:lag_max + 1] >= r[lag_min - 1 : lag_max]) & (r[lag_min:lag_max + 1] >= r[lag_min + 1 : lag_max + 2])
        candidates = np.flatnonzero(interior & (seg >= _OCTAVE_TOLERANCE * best))
        lag = lag_min + (candidates[0] if candidates.size else int(np.argmax(seg)))

        sf = smooth[i * hop : i * hop + frame_length]
        rs = _nccf(sf - sf.mean(), lag_max + 1)
        lo, hi = max(lag - 3, lag_min), min(lag + 3, lag_max)
        peak = lo + int(np.argmax(rs[lo : hi + 1]))
        voiced[i] = True
        f0[i] = sample_rate / _parabolic(rs, peak)
    return F0Track(f0, voiced, hop, sample_rate)


def _track(x):
    return x if isinstance(x, F0Track) else estimate_f0(x)


def _paired_tracks(ref, rec):
    a, b = _track(ref), _track(rec)
    if len(a) != len(b):
        raise LengthError(f"F0 tracks differ in length: {len(a)} vs {len(b)} frames")
    return a, b


def interpolate_unvoiced(track: F0Track):
    """Linearly bridge unvoiced frames between voiced ones (edges held); all-zero if never voiced."""
    idx = np.flatnonzero(track.voiced)
    if idx.size == 0:
        return np.zeros(len(track))
    return np.interp(np.arange(len(track)), idx, track.f0[idx])


def f0_rmse(ref, rec):
    """RMSE in Hz over frames voiced in the reference; NaN when none are."""
    a, b = _paired_tracks(ref, rec)
    v = a.voiced
    if not v.any():
        return float("nan")
    d = a.f0[v] - interpolate_unvoiced(b)[v]
    return float(np.sqrt(np.mean(d * d)))


def uv_error(ref, rec):
    """Fraction of frames whose voicing decisions disagree."""
    a, b = _paired_tracks(ref, rec)
    return float(np.mean(a.voiced != b.voiced))


# -- aggregation ---------------------------------------------------------------

def mean_ci(values):
    """``(mean, 1.96 * stderr, n)`` over finite values; the half-width is 0 for n == 1."""
    v = np.asarray([x for x in np.ravel(values) if np.isfinite(x)], dtype=np.float64)
    if v.size == 0:
        return float("nan"), float("nan"), 0
    if v.size == 1:
        return float(v[0]), 0.0, 1
    return float(v.mean()), float(1.96 * v.std(ddof=1) / np.sqrt(v.size)), int(v.size)


@dataclass
class ConditionStats:
    system: str
    gap_ms: int
    n: int
    mcd_curve: list
    mcd_ci: list
    mcd_mean: float
    mcd_mean_ci: float
    f0_rmse_hz: float
    f0_ci: float
    uv_err: float
    uv_ci: float
    single_sample: bool = False


@dataclass
class EvalReport:
    conditions: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def get(self, system, gap_ms):
        for c in self.conditions:
            if c.system == system and c.gap_ms == gap_ms:
                return c
        raise KeyError((system, gap_ms))

    def systems(self):
        return sorted({c.system for c in self.conditions})

    def gaps(self):
        return sorted({c.gap_ms for c in self.conditions})

    def to_dict(self):
        return {"provenance": self.provenance, "conditions": [c.__dict__ for c in self.conditions]}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, default=float)

    @classmethod
    def from_dict(cls, d):
        return cls([ConditionStats(**c) for c in d["conditions"]], d.get("provenance", {}))

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for c in self.conditions:
            for k, (m, ci) in enumerate(zip(c.mcd_curve, c.mcd_ci)):
                w.writerow([c.system, c.gap_ms, k * 10, f"{m:.6f}", f"{c.f0_rmse_hz:.6f}",
                            f"{c.uv_err:.6f}", f"{ci:.6f}", c.n])
        return buf.getvalue()


CSV_COLUMNS = ["system", "gap_ms", "offset_ms", "mcd_db", "f0_rmse_hz", "uv_err", "ci95", "n"]


def aggregate(entries, provenance=None):
    """Group per-utterance results by ``(system, gap_ms)`` into an :class:`EvalReport`.

    Each entry is a mapping with ``system``, ``gap_ms``, ``mcd`` (curve),
    ``f0_rmse`` and ``uv_err``.  Intervals are ``mean +/- 1.96 * stderr``
    across utterances.
    """
    entries = list(entries)
    if not entries:
        raise ValueError("cannot aggregate an empty set of results")
    groups = {}
    for e in entries:
        groups.setdefault((str(e["system"]), int(e["gap_ms"])), []).append(e)
    conditions = []
    for (system, gap), items in sorted(groups.items()):
        curves = [np.asarray(e["mcd"], dtype=np.float64) for e in items]
        length = min(c.shape[0] for c in curves)
        stack = np.stack([c[:length] for c in curves])
        per_offset = [mean_ci(stack[:, k]) for k in range(length)]
        mm, mci, n = mean_ci(stack.mean(axis=1))
        f0m, f0ci, _ = mean_ci([e["f0_rmse"] for e in items])
        uvm, uvci, _ = mean_ci([e["uv_err"] for e in items])
        conditions.append(ConditionStats(
            system=system, gap_ms=gap, n=n,
            mcd_curve=[p[0] for p in per_offset], mcd_ci=[p[1] for p in per_offset],
            mcd_mean=mm, mcd_mean_ci=mci, f0_rmse_hz=f0m, f0_ci=f0ci,
            uv_err=uvm, uv_ci=uvci, single_sample=n == 1,
        ))
    return EvalReport(conditions, dict(provenance or {}))

