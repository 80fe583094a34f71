"""Evaluation protocols: per-gap-length concealment and one-second prediction scenarios."""

from __future__ import annotations

import numpy as np

from . import PACKET_LENGTH, SAMPLE_RATE
from .conceal import SpliceConfig, baseline_repeat_frame, baseline_zero_fill, conceal_stream
from .dsp import AudioBuffer
from .metrics import aggregate, f0_rmse, mcd_curve, uv_error
from .model import PlaaeModel
from .packetsim import LossMask, LossProtocol, inject_losses, make_prediction_scenarios

GAP_LENGTHS_MS = (20, 40, 60, 120)
DROP_PROBABILITY = 0.1


def systems_for(model: PlaaeModel | None, splice: SpliceConfig = SpliceConfig()):
    """Name -> ``(audio, mask) -> AudioBuffer`` for the model (if any) and both baselines."""
    out = {"silence": baseline_zero_fill, "repeat": lambda a, m: baseline_repeat_frame(a, m, splice)}
    if model is not None:
        out["plaae"] = lambda a, m: conceal_stream(a, m, model, splice)
    return out


def _trim(x):
    """Whole packets only, so masks cover the signal exactly."""
    return x[: (x.shape[0] // PACKET_LENGTH) * PACKET_LENGTH]


def gap_mcd(ref, rec, mask: LossMask, sample_rate=SAMPLE_RATE):
    """Mean MCD curve over the gaps of ``mask`` (each gap's span is its own horizon); None if no gaps."""
    curves = []
    for g0, g1 in mask.gap_intervals():
        horizon_ms = (g1 - g0) * 1000 // sample_rate
        curves.append(mcd_curve(ref, rec, horizon_ms=horizon_ms, start=g0))
    if not curves:
        return None
    return np.mean(np.stack(curves), axis=0)


def evaluate_gap_lengths(utterances, systems, gap_lengths_ms=GAP_LENGTHS_MS, seed=0,
                         drop_probability=DROP_PROBABILITY, with_pitch=True):
    """Per-utterance results for every (system, gap length), ready for :func:`metrics.aggregate`.

    Every system sees the same masks: one per (utterance, gap length),
    seeded from ``seed``.  Utterances that draw no loss event are skipped for
    that gap length.
    """
    entries = []
    for k, uid in enumerate(sorted(utterances)):
        audio = utterances[uid]
        x = _trim(audio.samples if isinstance(audio, AudioBuffer) else np.asarray(audio))
        clean = AudioBuffer(x)
        count = x.shape[0] // PACKET_LENGTH
        for gap_ms in gap_lengths_ms:
            protocol = LossProtocol.from_gap_ms(gap_ms, drop_probability, seed=seed)
            mask = inject_losses(count, protocol, stream=k)
            if not mask.bits.any():
                continue
            for name, fn in systems.items():
                rec = fn(clean, mask)
                curve = gap_mcd(clean, rec, mask)
                entry = {"system": name, "gap_ms": gap_ms, "utterance": uid, "mcd": curve}
                if with_pitch:
                    entry["f0_rmse"] = f0_rmse(clean, rec)
                    entry["uv_err"] = uv_error(clean, rec)
                else:
                    entry["f0_rmse"] = entry["uv_err"] = float("nan")
                entries.append(entry)
    return entries


def evaluate_prediction(utterances, systems, seed=0, past_seconds=1.0, future_ms=120):
    """One second of past, then ``future_ms`` lost: MCD for every 10 ms of the future."""
    entries = []
    for sc in make_prediction_scenarios(utterances, seed, past_seconds, future_ms):
        x = np.concatenate([sc.past, sc.future])
        n_past = sc.past.shape[0] // PACKET_LENGTH
        n_future = -(-sc.future.shape[0] // PACKET_LENGTH)
        x = np.concatenate([x, np.zeros((n_past + n_future) * PACKET_LENGTH - x.shape[0])])
        bits = np.zeros(n_past + n_future, dtype=bool)
        bits[n_past:] = True
        mask = LossMask(bits)
        clean = AudioBuffer(x)
        for name, fn in systems.items():
            rec = fn(clean, mask)
            curve = mcd_curve(clean, rec, horizon_ms=future_ms, start=n_past * PACKET_LENGTH)
            entries.append({"system": name, "gap_ms": future_ms, "utterance": sc.utterance_id, "mcd": curve,
                            "f0_rmse": float("nan"), "uv_err": float("nan")})
    return entries


def ordering_check(report, gaps=GAP_LENGTHS_MS, model="plaae", silence="silence", strict_gaps=(20, 40),
                   tolerance_db=0.3):
    """Model MCD strictly below silence at ``strict_gaps``; both non-decreasing in gap length within tolerance."""
    means = {s: [report.get(s, g).mcd_mean for g in gaps] for s in (model, silence)}
    below = {g: report.get(model, g).mcd_mean < report.get(silence, g).mcd_mean for g in strict_gaps}
    monotone = {s: all(b - a > -tolerance_db for a, b in zip(v, v[1:])) for s, v in means.items()}
    return {"means": means, "below_silence": below, "monotone": monotone,
            "passed": all(below.values()) and all(monotone.values())}


__all__ = [
    "GAP_LENGTHS_MS", "aggregate", "evaluate_gap_lengths", "evaluate_prediction", "gap_mcd",
    "ordering_check", "systems_for",
]
