"""Least-squares adversarial objectives and the multi-resolution STFT loss."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dsp import AudioBuffer, hann_window
from .errors import ConfigError
from .tensor import Tensor, absolute, clamp_min, log, sqrt, square, stft_magnitude

SC_EPS = 1e-8
MAG_FLOOR = 1e-5


@dataclass(frozen=True, order=True)
class StftResolution:
    fft_size: int
    hop_length: int
    window_length: int

    def __post_init__(self):
        if self.window_length > self.fft_size or self.hop_length < 1:
            raise ConfigError(f"invalid STFT resolution {self}")


DEFAULT_RESOLUTIONS = (
    StftResolution(1024, 120, 600),
    StftResolution(2048, 240, 1200),
    StftResolution(512, 50, 240),
)


@dataclass(frozen=True)
class MultiStftConfig:
    resolutions: tuple = field(default=DEFAULT_RESOLUTIONS)
    alpha: float = 1.0

    def __post_init__(self):
        res = tuple(r if isinstance(r, StftResolution) else StftResolution(*r) for r in self.resolutions)
        object.__setattr__(self, "resolutions", res)
        if not res:
            raise ConfigError("need at least one STFT resolution")
        if self.alpha < 0:
            raise ConfigError("alpha must be non-negative")


def _signal(x):
    if isinstance(x, Tensor):
        t = x
    elif isinstance(x, AudioBuffer):
        t = Tensor(x.samples)
    else:
        t = Tensor(np.asarray(x, dtype=np.float64))
    if t.ndim == 1:
        t = t.reshape(1, t.shape[0])
    elif t.ndim == 3:
        t = t.reshape(t.shape[0], t.shape[2])
    return t


def _magnitudes(x, res: StftResolution):
    return stft_magnitude(x, res.fft_size, res.hop_length, hann_window(res.window_length))


def spectral_convergence(ref, est, resolution: StftResolution):
    """``|| |R| - |E| ||_F / || |R| ||_F`` per signal, averaged over the batch."""
    R, E = _magnitudes(_signal(ref), resolution), _magnitudes(_signal(est), resolution)
    num = sqrt(square(R - E).sum(axis=(1, 2)))
    den = clamp_min(sqrt(square(R).sum(axis=(1, 2))), SC_EPS)
    return (num / den).mean()


def log_magnitude_loss(ref, est, resolution: StftResolution):
    """Mean absolute difference of natural-log magnitudes floored at ``MAG_FLOOR``."""
    R, E = _magnitudes(_signal(ref), resolution), _magnitudes(_signal(est), resolution)
    return absolute(log(clamp_min(R, MAG_FLOOR)) - log(clamp_min(E, MAG_FLOOR))).mean()


def multi_stft_loss(ref, est, cfg: MultiStftConfig = MultiStftConfig()):
    """``(1/R) sum_r (SC_r + MAG_r)``.

    Resolutions are visited in sorted order, so the result does not depend on
    how they were listed.
    """
    ref, est = _signal(ref), _signal(est)
    total = None
    for res in sorted(cfg.resolutions):
        term = spectral_convergence(ref, est, res) + log_magnitude_loss(ref, est, res)
        total = term if total is None else total + term
    return total * (1.0 / len(cfg.resolutions))


def _score_list(scores):
    if isinstance(scores, (list, tuple)):
        return [s if isinstance(s, Tensor) else Tensor(s) for s in scores]
    return [scores if isinstance(scores, Tensor) else Tensor(scores)]


def lsgan_discriminator_loss(scores_real, scores_fake):
    """``1/2 E[(D(x) - 1)^2] + 1/2 E[D(G(x~))^2]``, averaged over discriminators."""
    real, fake = _score_list(scores_real), _score_list(scores_fake)
    if len(real) != len(fake):
        raise ValueError("need the same number of real and fake score maps")
    total = None
    for r, f in zip(real, fake):
        term = 0.5 * square(r - 1.0).mean() + 0.5 * square(f).mean()
        total = term if total is None else total + term
    return total * (1.0 / len(real))


def lsgan_generator_adv_loss(scores_fake):
    """``E[(D(G(x~)) - 1)^2]``, averaged over discriminators."""
    fake = _score_list(scores_fake)
    total = None
    for f in fake:
        term = square(f - 1.0).mean()
        total = term if total is None else total + term
    return total * (1.0 / len(fake))


def generator_total_loss(ref, est, scores_fake, cfg: MultiStftConfig = MultiStftConfig()):
    """Adversarial term plus ``alpha`` times the multi-resolution STFT loss."""
    adv = lsgan_generator_adv_loss(scores_fake)
    if cfg.alpha == 0:
        return adv
    return adv + cfg.alpha * multi_stft_loss(ref, est, cfg)
