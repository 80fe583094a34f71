"""Packetization, seeded loss injection and zero-fill masking."""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import PACKET_LENGTH, SAMPLE_RATE
from .dsp import AudioBuffer, StftConfig, frame_count
from .errors import ConfigError, LengthError

GAP_LENGTHS_MS = (20, 40, 60, 120)
DROP_PROBABILITY = 0.1


@dataclass(frozen=True)
class LossMask:
    """Per-packet loss bits (True = lost) over ``packet_length``-sample packets."""

    bits: np.ndarray
    packet_length: int = PACKET_LENGTH

    def __post_init__(self):
        b = np.asarray(self.bits, dtype=bool)
        if b.ndim != 1:
            raise ValueError("LossMask bits must be 1-D")
        object.__setattr__(self, "bits", b)

    def __len__(self):
        return self.bits.shape[0]

    def __eq__(self, other):
        return (
            isinstance(other, LossMask)
            and self.packet_length == other.packet_length
            and np.array_equal(self.bits, other.bits)
        )

    @classmethod
    def clear(cls, n_packets, packet_length=PACKET_LENGTH):
        return cls(np.zeros(n_packets, dtype=bool), packet_length)

    @property
    def loss_rate(self):
        return float(self.bits.mean()) if len(self) else 0.0

    def gaps(self):
        """Runs of lost packets as ``(first_packet, n_packets)`` tuples."""
        b = np.concatenate([[False], self.bits, [False]]).astype(np.int8)
        d = np.diff(b)
        starts, ends = np.flatnonzero(d == 1), np.flatnonzero(d == -1)
        return [(int(s), int(e - s)) for s, e in zip(starts, ends)]

    def gap_intervals(self):
        """Lost regions in samples as half-open ``(start, end)`` pairs."""
        L = self.packet_length
        return [(s * L, (s + n) * L) for s, n in self.gaps()]

    def sample_mask(self, n_samples):
        """Boolean per-sample loss indicator; samples past the last packet are kept."""
        out = np.zeros(n_samples, dtype=bool)
        covered = min(len(self) * self.packet_length, n_samples)
        out[:covered] = np.repeat(self.bits, self.packet_length)[:covered]
        return out


@dataclass(frozen=True)
class LossProtocol:
    drop_probability: float = DROP_PROBABILITY
    gap_length_packets: int = 1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.drop_probability <= 1.0:
            raise ConfigError(f"drop_probability must be in [0, 1], got {self.drop_probability}")
        if self.gap_length_packets < 1:
            raise ConfigError("gap_length_packets must be >= 1")

    @classmethod
    def from_gap_ms(cls, gap_ms, drop_probability=DROP_PROBABILITY, seed=0,
                    packet_length=PACKET_LENGTH, sample_rate=SAMPLE_RATE):
        packet_ms = 1000.0 * packet_length / sample_rate
        n = gap_ms / packet_ms
        if n != int(n) or n < 1:
            raise ConfigError(f"gap of {gap_ms} ms is not a whole number of {packet_ms:g} ms packets")
        return cls(drop_probability, int(n), seed)

    @property
    def gap_ms(self):
        return self.gap_length_packets * 1000 * PACKET_LENGTH // SAMPLE_RATE


def rng_for(seed, stream=0):
    """PCG64 generator for ``(seed, stream)``; streams are independent and portable."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(stream)])))


def packetize(audio, packet_length=PACKET_LENGTH):
    """Return ``(packet_count, tail_samples)``; the tail is never loss-eligible."""
    n = len(audio)
    return n // packet_length, n % packet_length


def inject_losses(packet_count, protocol: LossProtocol, stream=0, packet_length=PACKET_LENGTH):
    """Seeded left-to-right loss injection.

    A loss event may start at packet ``i`` only if packet ``i-1`` was kept; it
    starts with ``drop_probability`` and spans ``gap_length_packets`` packets.
    Events that would run past the last packet are skipped.
    """
    rng = rng_for(protocol.seed, stream)
    bits = np.zeros(packet_count, dtype=bool)
    n, p = protocol.gap_length_packets, protocol.drop_probability
    # one block of uniforms up front keeps the stream layout independent of p
    draws = rng.random(packet_count)
    i = 0
    while i < packet_count:
        if draws[i] < p and i + n <= packet_count:
            bits[i : i + n] = True
            i += n + 1  # the packet after an event is never eligible
        else:
            i += 1
    return LossMask(bits, packet_length)


def flag_frames(mask: LossMask, n_frames, cfg: StftConfig = StftConfig(), pad_left=0):
    """1.0 for frames whose analysis window overlaps a lost packet, else 0.0.

    Frame ``t`` spans samples ``[t*hop - pad_left, t*hop - pad_left + window)``.
    """
    flags = np.zeros(n_frames)
    starts = cfg.hop_length * np.arange(n_frames) - pad_left
    ends = starts + cfg.window_length
    for g0, g1 in mask.gap_intervals():
        flags[(starts < g1) & (ends > g0)] = 1.0
    return flags


def apply_mask(audio: AudioBuffer, mask: LossMask, cfg: StftConfig = StftConfig()):
    """Zero-fill lost packets.  Returns ``(lossy_audio, flags)`` on the uncentered frame grid."""
    count, _ = packetize(audio, mask.packet_length)
    if count != len(mask):
        raise LengthError(f"mask has {len(mask)} packets but audio holds {count}")
    lost = mask.sample_mask(len(audio))
    lossy = np.where(lost, 0.0, audio.samples)
    n_frames = frame_count(len(audio), cfg.window_length, cfg.hop_length)
    return AudioBuffer(lossy, audio.sample_rate), flag_frames(mask, n_frames, cfg)


@dataclass(frozen=True)
class Scenario:
    """One second of past context and the ground-truth future that follows it."""

    utterance_id: str
    start: int
    past: np.ndarray
    future: np.ndarray


def make_prediction_scenarios(corpus, seed=0, past_seconds=1.0, future_ms=120, sample_rate=SAMPLE_RATE):
    """One randomly placed (past, future) pair per utterance long enough to hold it.

    ``corpus`` maps utterance ids to :class:`AudioBuffer` (or is an iterable of
    ``(id, AudioBuffer)`` pairs).
    """
    items = corpus.items() if hasattr(corpus, "items") else corpus
    n_past = int(round(past_seconds * sample_rate))
    n_future = int(round(future_ms * sample_rate / 1000))
    out = []
    for k, (uid, audio) in enumerate(sorted(items, key=lambda kv: kv[0])):
        x = audio.samples if isinstance(audio, AudioBuffer) else np.asarray(audio)
        room = x.shape[0] - n_past - n_future
        if room < 0:
            continue
        start = int(rng_for(seed, k).integers(0, room + 1))
        out.append(Scenario(uid, start, x[start : start + n_past].copy(),
                            x[start + n_past : start + n_past + n_future].copy()))
    return out


# -- mask sidecar -------------------------------------------------------------

def rle_encode(bits):
    """Run-length string such as ``"K12L1K30"`` (K = kept, L = lost)."""
    bits = np.asarray(bits, dtype=bool)
    if bits.size == 0:
        return ""
    change = np.flatnonzero(np.diff(bits.astype(np.int8))) + 1
    bounds = np.concatenate([[0], change, [bits.size]])
    return "".join(f"{'L' if bits[a] else 'K'}{b - a}" for a, b in zip(bounds[:-1], bounds[1:]))


_RLE = re.compile(r"([KL])(\d+)")


def rle_decode(text):
    text = text.strip()
    runs = _RLE.findall(text)
    if "".join(f"{c}{n}" for c, n in runs) != text:
        raise ValueError(f"malformed RLE mask string: {text[:40]!r}")
    if not runs:
        return np.zeros(0, dtype=bool)
    return np.concatenate([np.full(int(n), c == "L") for c, n in runs])


def save_mask(path, mask: LossMask, seed=None, protocol: LossProtocol | None = None, extra=None):
    doc = {
        "packet_length": mask.packet_length,
        "bits": rle_encode(mask.bits),
        "seed": seed,
        "protocol": asdict(protocol) if protocol else {},
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2))
    return doc


def load_mask(path):
    doc = json.loads(Path(path).read_text())
    return LossMask(rle_decode(doc["bits"]), int(doc["packet_length"])), doc
