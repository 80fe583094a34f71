"""Corpus manifests: synthetic pseudo-speech for desk-scale runs and WAV directory ingestion."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .. import SAMPLE_RATE
from ..dsp import AudioBuffer
from ..packetsim import rng_for
from ..wav import read_wav

log = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")
GATE_DBFS = -40.0
GATE_FRAME = 160
MAX_EDGE_SILENCE = 1600  # 100 ms


@dataclass(frozen=True)
class CorpusEntry:
    utterance_id: str
    path: str | None
    split: str
    speaker_id: str


@dataclass
class CorpusManifest:
    """Utterance list plus an optional in-memory cache of waveforms (and known F0 tracks)."""

    entries: list = field(default_factory=list)
    audio: dict = field(default_factory=dict)
    f0: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.entries)

    def split(self, name):
        return [e for e in self.entries if e.split == name]

    def load(self, entry: CorpusEntry) -> AudioBuffer:
        if entry.utterance_id in self.audio:
            return self.audio[entry.utterance_id]
        if entry.path is None:
            raise KeyError(f"no audio for {entry.utterance_id}")
        return read_wav(entry.path)

    def waveforms(self, split):
        return {e.utterance_id: self.load(e) for e in self.split(split)}

    def speakers(self, split):
        return {e.speaker_id for e in self.split(split)}


def assign_splits(speakers, fractions=(0.8, 0.1, 0.1)):
    """Deterministic speaker-to-split assignment; every split gets at least one speaker when possible."""
    speakers = sorted(speakers)
    n = len(speakers)
    n_valid = max(1, int(round(fractions[1] * n))) if n >= 3 else 0
    n_test = max(1, int(round(fractions[2] * n))) if n >= 3 else 0
    n_train = n - n_valid - n_test
    out = {}
    for i, s in enumerate(speakers):
        out[s] = "train" if i < n_train else ("valid" if i < n_train + n_valid else "test")
    return out


# -- synthetic pseudo-speech ---------------------------------------------------

@dataclass(frozen=True)
class SynthVoice:
    f0_center: float
    formants: tuple  # one (F1, F2, F3) triple per vowel
    bandwidths: tuple = (80.0, 120.0, 160.0)
    breathiness: float = 0.02


def _resonator(freq, bw, sr):
    r = np.exp(-np.pi * bw / sr)
    a = np.array([1.0, -2.0 * r * np.cos(2 * np.pi * freq / sr), r * r])
    return np.array([1.0 - r]), a


def _formant_filter(x, formants, bandwidths, sr):
    y = x
    for f, bw in zip(formants, bandwidths):
        b, a = _resonator(f, bw, sr)
        y = lfilter(b, a, y)
    return y


def _ramp(n, edge):
    env = np.ones(n)
    edge = min(edge, n // 2)
    if edge:
        r = 0.5 - 0.5 * np.cos(np.pi * (np.arange(edge) + 0.5) / edge)
        env[:edge] = r
        env[n - edge :] = r[::-1]
    return env


def _voice(rng):
    center = rng.uniform(90.0, 250.0)
    vowels = tuple(
        (rng.uniform(300, 850), rng.uniform(850, 2300), rng.uniform(2300, 3200)) for _ in range(5)
    )
    return SynthVoice(center, vowels, breathiness=rng.uniform(0.005, 0.03))


def synth_utterance(rng, voice: SynthVoice, sr=SAMPLE_RATE):
    """One 2-4 s pseudo-utterance and its per-sample F0 (0 where unvoiced)."""
    n_total = int(rng.uniform(2.0, 4.0) * sr)
    out = np.zeros(n_total)
    f0_samples = np.zeros(n_total)
    pos = int(rng.uniform(0.02, 0.08) * sr)  # short leading silence
    f0 = voice.f0_center * rng.uniform(0.9, 1.1)
    lo, hi = max(80.0, voice.f0_center * 0.75), min(300.0, voice.f0_center * 1.3)
    while pos < n_total:
        kind = rng.choice(3, p=(0.65, 0.2, 0.15))
        if kind == 0:  # voiced, formant-filtered sawtooth with drifting F0
            n = min(int(rng.uniform(0.15, 0.45) * sr), n_total - pos)
            n_ctrl = n // 160 + 2
            walk = f0 + np.cumsum(rng.normal(0.0, 1.5, n_ctrl))
            walk = np.clip(walk, lo, hi)
            f0 = walk[-1]
            contour = np.interp(np.arange(n) / 160.0, np.arange(n_ctrl), walk)
            phase = np.cumsum(contour / sr)
            excitation = 2.0 * (phase % 1.0) - 1.0
            excitation += voice.breathiness * rng.standard_normal(n)
            vowel = voice.formants[rng.integers(len(voice.formants))]
            seg = _formant_filter(excitation, vowel, voice.bandwidths, sr)
            seg *= _ramp(n, 160) * rng.uniform(0.6, 1.0)
            f0_samples[pos : pos + n] = contour
        elif kind == 1:  # fricative-like amplitude-modulated noise burst
            n = min(int(rng.uniform(0.05, 0.15) * sr), n_total - pos)
            centre = rng.uniform(2500, 6000)
            seg = _formant_filter(rng.standard_normal(n), (centre,), (rng.uniform(600, 1500),), sr)
            seg *= _ramp(n, 80) * (0.6 + 0.4 * np.sin(2 * np.pi * rng.uniform(5, 30) * np.arange(n) / sr))
            seg *= rng.uniform(0.1, 0.3)
        else:  # pause
            n = min(int(rng.uniform(0.05, 0.2) * sr), n_total - pos)
            seg = np.zeros(n)
        out[pos : pos + n] = seg
        pos += n
    peak = np.max(np.abs(out))
    if peak > 0:
        scale = rng.uniform(0.3, 0.7) / peak
        out *= scale
    return out, f0_samples


def frame_f0(f0_samples, frame_length=400, hop=160):
    """Reference F0 per analysis frame: the contour at the frame centre, 0 if any sample is unvoiced."""
    n = (f0_samples.shape[0] - frame_length) // hop + 1
    out = np.zeros(max(n, 0))
    for i in range(max(n, 0)):
        seg = f0_samples[i * hop : i * hop + frame_length]
        if np.all(seg > 0):
            out[i] = seg[frame_length // 2]
    return out


def synth_corpus(n_utterances, seed=0, n_speakers=None):
    """Deterministic synthetic corpus with speaker-disjoint splits.

    Utterances are distributed round-robin over ``n_speakers`` voices
    (default: one voice per 4 utterances, at least 3 so every split exists).
    """
    if n_speakers is None:
        n_speakers = max(3, n_utterances // 4) if n_utterances >= 3 else max(1, n_utterances)
    n_speakers = min(n_speakers, max(n_utterances, 1))
    voices = [_voice(rng_for(seed, 1_000_000 + s)) for s in range(n_speakers)]
    names = [f"spk{s:03d}" for s in range(n_speakers)]
    split_of = assign_splits(names)
    manifest = CorpusManifest()
    for u in range(n_utterances):
        s = u % n_speakers
        x, f0 = synth_utterance(rng_for(seed, u), voices[s])
        uid = f"{names[s]}_{u:05d}"
        manifest.entries.append(CorpusEntry(uid, None, split_of[names[s]], names[s]))
        manifest.audio[uid] = AudioBuffer(x)
        manifest.f0[uid] = f0
    return manifest


# -- WAV directory ingestion ---------------------------------------------------

def energy_gate_trim(x, gate_dbfs=GATE_DBFS, frame=GATE_FRAME, keep=MAX_EDGE_SILENCE):
    """Trim leading/trailing silence so that at most ``keep`` samples of it remain at each edge.

    A 10 ms frame is active when its RMS reaches ``gate_dbfs``.
    """
    n_frames = x.shape[0] // frame
    if n_frames == 0:
        return x
    frames = x[: n_frames * frame].reshape(n_frames, frame)
    rms = np.sqrt(np.mean(frames * frames, axis=1))
    active = np.flatnonzero(rms >= 10.0 ** (gate_dbfs / 20.0))
    if active.size == 0:
        return x[:0]
    first = active[0] * frame
    last = min(x.shape[0], (active[-1] + 1) * frame)
    return x[max(0, first - keep) : min(x.shape[0], last + keep)]


def speaker_of(path: Path, root: Path):
    """Speaker id: the first directory below ``root``, else the filename prefix before ``_``."""
    rel = path.relative_to(root)
    if len(rel.parts) > 1:
        return rel.parts[0]
    return path.stem.split("_")[0]


def ingest_wav_corpus(directory, trim=True, fractions=(0.8, 0.1, 0.1)):
    """Scan ``directory`` for 16 kHz mono WAVs and build a speaker-stratified manifest.

    Files with another rate or channel count raise :class:`AudioFormatError`.
    """
    root = Path(directory)
    files = sorted(root.rglob("*.wav"))
    if not files:
        log.warning("no WAV files under %s; manifest is empty", root)
        return CorpusManifest()
    manifest = CorpusManifest()
    speakers = {}
    for f in files:
        audio = read_wav(f)
        x = energy_gate_trim(audio.samples) if trim else audio.samples
        uid = str(f.relative_to(root).with_suffix("")).replace("/", "_")
        speakers[uid] = speaker_of(f, root)
        manifest.audio[uid] = AudioBuffer(x, audio.sample_rate)
        manifest.entries.append(CorpusEntry(uid, str(f), "", speakers[uid]))
    split_of = assign_splits(set(speakers.values()), fractions)
    manifest.entries = [CorpusEntry(e.utterance_id, e.path, split_of[e.speaker_id], e.speaker_id)
                        for e in manifest.entries]
    return manifest

