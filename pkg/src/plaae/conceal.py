"""Splice model predictions into a lossy stream, plus trivial baselines."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import HOP_LENGTH, PACKET_LENGTH
from .dsp import AudioBuffer
from .errors import ConfigError, LengthError
from .model import PlaaeModel, conceal_forward
from .packetsim import LossMask, apply_mask, packetize

SILENT_ENERGY = 1e-10


@dataclass(frozen=True)
class SpliceConfig:
    fade_length: int = PACKET_LENGTH // 4
    extra_frames: int = 2
    phase_search_window: int = HOP_LENGTH
    packet_length: int = PACKET_LENGTH
    hop_length: int = HOP_LENGTH

    def __post_init__(self):
        if not 1 <= self.fade_length <= self.packet_length:
            raise ConfigError(f"fade_length must lie in [1, {self.packet_length}], got {self.fade_length}")
        if self.extra_frames * self.hop_length < self.fade_length:
            raise ConfigError("extra predicted frames must cover the closing fade")
        if self.phase_search_window < 1:
            raise ConfigError("phase_search_window must be at least 1")


def _ncc(a, b):
    den = np.sqrt(np.dot(a, a) * np.dot(b, b))
    return np.dot(a, b) / den if den > 0 else -np.inf


def phase_align(prediction, last_real, search_window=HOP_LENGTH):
    """Forward shift of ``prediction`` that best matches ``last_real``.

    ``prediction[s : s + len(last_real)]`` is compared with ``last_real`` by
    normalized cross-correlation for every ``s`` in ``[0, search_window)``
    that fits inside ``prediction``.  Ties go to the smallest shift.
    """
    p = np.asarray(prediction, dtype=np.float64)
    r = np.asarray(last_real, dtype=np.float64)
    n = r.shape[0]
    if n == 0 or np.dot(r, r) < SILENT_ENERGY:
        return 0
    limit = min(int(search_window), p.shape[0] - n + 1)
    best, best_score = 0, -np.inf
    for s in range(max(limit, 0)):
        score = _ncc(r, p[s : s + n])
        if score > best_score:
            best, best_score = s, score
    return best


def cross_fade(real_segment, predicted_segment, fade_length=None):
    """Linear transition from the first segment to the second.

    Weights are ``w[n] = n / (fade_length - 1)`` so the first output sample is
    the first segment and the last one is the second.
    """
    a = np.asarray(real_segment, dtype=np.float64)
    b = np.asarray(predicted_segment, dtype=np.float64)
    if a.shape != b.shape:
        raise LengthError(f"segments differ in length: {a.shape} vs {b.shape}")
    F = a.shape[0] if fade_length is None else int(fade_length)
    if F != a.shape[0]:
        raise LengthError(f"fade length {F} does not match segment length {a.shape[0]}")
    w = np.arange(F) / (F - 1) if F > 1 else np.ones(F)
    return a * (1.0 - w) + b * w


def _splice(received, mask: LossMask, predict_gap, cfg: SpliceConfig, report):
    """Replace every gap of ``received`` using ``predict_gap(g0, g1) -> samples`` for ``[g0, g1 + fade)``.

    ``predict_gap`` returns ``None`` when the gap should stay silent with no fades.
    """
    out = received.copy()
    n = out.shape[0]
    F = cfg.fade_length
    for g0, g1 in mask.gap_intervals():
        g1 = min(g1, n)
        if g0 >= n:
            break
        tail = min(F, n - g1)
        pred = predict_gap(g0, g1, tail)
        if pred is None:
            out[g0:g1] = 0.0
            continue
        head = min(F, g0)
        # onset: real -> prediction over the last real samples before the gap
        if head:
            out[g0 - head : g0] = cross_fade(received[g0 - head : g0], pred[:head], head)
        out[g0:g1] = pred[head : head + g1 - g0]
        # end: prediction -> real over the first samples after the gap
        if tail:
            out[g1 : g1 + tail] = cross_fade(pred[head + g1 - g0 :], received[g1 : g1 + tail], tail)
        report["gaps"].append({"start": int(g0), "length": int(g1 - g0)})
    return out


def _new_report():
    return {"gaps": [], "warnings": []}


def _check(audio: AudioBuffer, mask: LossMask):
    count, _ = packetize(audio, mask.packet_length)
    if count != len(mask):
        raise LengthError(f"mask covers {len(mask)} packets, signal holds {count}")


def conceal_stream(audio: AudioBuffer, mask: LossMask, model: PlaaeModel, cfg: SpliceConfig = SpliceConfig(),
                   report=None) -> AudioBuffer:
    """Fill every gap with the model's prediction, phase-aligned and cross-faded.

    The model runs once over the zero-filled stream.  It is extended by lost
    packets so that extra predicted frames exist past the end of the input
    for alignment and the closing fade.  Samples outside gaps and fades are
    copied unchanged.
    """
    _check(audio, mask)
    report = _new_report() if report is None else report
    report.setdefault("gaps", [])
    report.setdefault("warnings", [])
    x = audio.samples
    n = x.shape[0]
    if n == 0:
        return AudioBuffer(np.zeros(0), audio.sample_rate)
    L = mask.packet_length
    extra = cfg.phase_search_window + cfg.extra_frames * cfg.hop_length
    pad_packets = -(-(extra + (-n % L)) // L)
    ext_bits = np.concatenate([mask.bits, np.ones(pad_packets, dtype=bool)])
    ext_mask = LossMask(ext_bits, L)
    zero_filled = x * ~mask.sample_mask(n)
    ext_audio = np.concatenate([zero_filled, np.zeros(len(ext_mask) * L - n)])
    prediction = conceal_forward(model, AudioBuffer(ext_audio, audio.sample_rate), ext_mask).samples

    gaps = mask.gap_intervals()
    if gaps and gaps[0][0] < cfg.hop_length:
        report["warnings"].append("less than one frame of history before the first gap")

    H = cfg.hop_length

    def predict_gap(g0, g1, tail):
        head = min(cfg.fade_length, g0)
        last = x[max(0, g0 - H) : g0]
        shift = phase_align(prediction[g0 - last.shape[0] :], last, cfg.phase_search_window)
        report.setdefault("shifts", []).append(int(shift))
        return prediction[g0 - head + shift : g1 + tail + shift]

    out = _splice(x, mask, predict_gap, cfg, report)
    return AudioBuffer(out, audio.sample_rate)


def baseline_zero_fill(audio: AudioBuffer, mask: LossMask) -> AudioBuffer:
    """Lost packets become silence."""
    _check(audio, mask)
    lossy, _ = apply_mask(audio, mask)
    return lossy


def baseline_repeat_frame(audio: AudioBuffer, mask: LossMask, cfg: SpliceConfig = SpliceConfig()) -> AudioBuffer:
    """Repeat the last received packet through each gap, cross-faded at both ends.

    A gap with no received packet before it stays silent.
    """
    _check(audio, mask)
    x = audio.samples
    L = mask.packet_length
    report = _new_report()

    def predict_gap(g0, g1, tail):
        if g0 < L:
            return None
        head = min(cfg.fade_length, g0)
        last = x[g0 - L : g0]
        idx = np.arange(g0 - head, g1 + tail) - g0
        return last[idx % L]

    out = _splice(x, mask, predict_gap, cfg, report)
    return AudioBuffer(out, audio.sample_rate)
