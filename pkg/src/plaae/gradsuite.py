"""Randomized finite-difference checks for every differentiable layer and loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import hann_window
from .losses import (
    MultiStftConfig,
    StftResolution,
    log_magnitude_loss,
    lsgan_discriminator_loss,
    lsgan_generator_adv_loss,
    multi_stft_loss,
    spectral_convergence,
)
from .tensor import (
    ConvSpec,
    Tensor,
    avg_pool1d,
    causal_conv1d,
    conv1d,
    conv_transpose1d_nonoverlap,
    gradcheck,
    layer_norm,
    leaky_relu,
    linear_1x1,
    no_grad,
    relu,
    stft_magnitude,
    tanh,
    weight_norm_reparam,
)

TOLERANCE = 1e-4

# Small resolutions keep the loss checks cheap; the default triple is checked separately.
_SMALL_RES = (StftResolution(64, 8, 32), StftResolution(128, 16, 64), StftResolution(32, 4, 16))


def _away_from_zero(rng, shape, margin=0.05):
    """Uniform values whose magnitude stays above ``margin`` (kinks at 0 upset finite differences)."""
    x = rng.uniform(margin, 1.0, shape)
    return x * rng.choice([-1.0, 1.0], shape)


def _causal_conv(rng):
    cin, cout = rng.integers(1, 4, 2)
    k, d = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    spec = ConvSpec(int(cin), int(cout), k, dilation=d)
    T = int(rng.integers(4, 10))
    return (lambda x, w, b: causal_conv1d(x, spec, w, b),
            [rng.standard_normal((cin, T)), rng.standard_normal(spec.weight_shape), rng.standard_normal(cout)])


def _strided_conv(rng):
    cin, cout = rng.integers(1, 3, 2)
    k, s = int(rng.integers(3, 8)), int(rng.integers(1, 4))
    pad = (k - 1) // 2
    T = int(rng.integers(k, k + 10))
    return (lambda x, w, b: conv1d(x, w, b, stride=s, pad_left=pad, pad_right=pad),
            [rng.standard_normal((2, cin, T)), rng.standard_normal((cout, cin, k)), rng.standard_normal(cout)])


def _transposed(rng):
    cin, cout = rng.integers(1, 4, 2)
    s = int(rng.integers(2, 6))
    spec = ConvSpec(int(cin), int(cout), s, stride=s, weight_normalized=True)
    return (lambda x, w, b: conv_transpose1d_nonoverlap(x, spec, w, b),
            [rng.standard_normal((cin, int(rng.integers(2, 6)))), rng.standard_normal(spec.weight_shape),
             rng.standard_normal(cout)])


def _linear(rng):
    cin, cout = rng.integers(1, 5, 2)
    return (linear_1x1, [rng.standard_normal((2, cin, 5)), rng.standard_normal((cout, cin)), rng.standard_normal(cout)])


def _layer_norm(rng):
    C, T = int(rng.integers(2, 6)), int(rng.integers(2, 6))
    return (layer_norm, [rng.standard_normal((C, T)), rng.standard_normal(C), rng.standard_normal(C)])


def _weight_norm(rng):
    shape = (int(rng.integers(1, 4)), int(rng.integers(1, 4)), int(rng.integers(1, 4)))
    return (weight_norm_reparam, [rng.standard_normal(shape), rng.uniform(0.5, 2.0, shape[0])])


def _relu(rng):
    return (relu, [_away_from_zero(rng, (3, 7))])


def _leaky(rng):
    slope = float(rng.uniform(0.0, 0.5))
    return (lambda x: leaky_relu(x, slope), [_away_from_zero(rng, (3, 7))])


def _tanh(rng):
    return (tanh, [rng.standard_normal((3, 7))])


def _avg_pool(rng):
    f = int(rng.integers(1, 5))
    return (lambda x: avg_pool1d(x, f), [rng.standard_normal((2, 1, int(rng.integers(f, 4 * f + 3))))])


def _stft(rng):
    n_fft = int(rng.choice([16, 32]))
    win = hann_window(int(rng.integers(n_fft // 2, n_fft + 1)))
    hop = int(rng.integers(2, 8))
    return (lambda x: stft_magnitude(x, n_fft, hop, win), [rng.standard_normal((2, int(rng.integers(n_fft, 3 * n_fft))))])


def _magnitudes(x, res):
    return stft_magnitude(Tensor(x), res.fft_size, res.hop_length, hann_window(res.window_length)).data


def _pair(rng, resolutions, batch=2, min_magnitude=0.05, min_log_gap=1e-4):
    """Random signal pair whose STFT bins sit away from the magnitude floor and from |log R - log E| = 0.

    Near either point a 1e-5 finite-difference step crosses a kink or a
    region of extreme curvature, which says nothing about the gradient.
    """
    while True:
        T = int(rng.integers(128, 160))
        a, b = rng.standard_normal((batch, T)), rng.standard_normal((batch, T))
        ok = True
        for res in resolutions:
            R, E = _magnitudes(a, res), _magnitudes(b, res)
            if min(R.min(), E.min()) < min_magnitude or np.abs(np.log(R) - np.log(E)).min() < min_log_gap:
                ok = False
                break
        if ok:
            return [a, b]


def _sc(rng):
    res = _SMALL_RES[int(rng.integers(len(_SMALL_RES)))]
    return (lambda a, b: spectral_convergence(a, b, res), _pair(rng, [res]))


def _mag(rng):
    res = _SMALL_RES[int(rng.integers(len(_SMALL_RES)))]
    return (lambda a, b: log_magnitude_loss(a, b, res), _pair(rng, [res]))


def _multi_stft(rng):
    cfg = MultiStftConfig(resolutions=_SMALL_RES)
    return (lambda a, b: multi_stft_loss(a, b, cfg), _pair(rng, _SMALL_RES, batch=1))


def _lsgan_d(rng):
    return (lambda r, f: lsgan_discriminator_loss([r], [f]), [rng.standard_normal((2, 1, 6)), rng.standard_normal((2, 1, 6))])


def _lsgan_g(rng):
    return (lambda f: lsgan_generator_adv_loss([f]), [rng.standard_normal((2, 1, 6))])


CASES = {
    "causal_conv1d": _causal_conv,
    "strided_conv1d": _strided_conv,
    "conv_transpose1d_nonoverlap": _transposed,
    "linear_1x1": _linear,
    "layer_norm": _layer_norm,
    "weight_norm_reparam": _weight_norm,
    "relu": _relu,
    "leaky_relu": _leaky,
    "tanh": _tanh,
    "avg_pool1d": _avg_pool,
    "stft_magnitude": _stft,
    "spectral_convergence": _sc,
    "log_magnitude_loss": _mag,
    "multi_stft_loss": _multi_stft,
    "lsgan_discriminator_loss": _lsgan_d,
    "lsgan_generator_adv_loss": _lsgan_g,
}


@dataclass(frozen=True)
class CheckResult:
    name: str
    instances: int
    worst: float

    @property
    def passed(self):
        return self.worst < TOLERANCE


def run_case(name, instances=20, seed=0):
    build = CASES[name]
    worst = 0.0
    for i in range(instances):
        rng = np.random.default_rng([seed, i, sum(map(ord, name))])
        op, inputs = build(rng)
        worst = max(worst, gradcheck(op, inputs, seed=i))
    return CheckResult(name, instances, worst)


def run_suite(instances=20, seed=0, names=None):
    return [run_case(n, instances, seed) for n in (names or CASES)]


def check_default_multi_stft(seed=0, length=1300):
    """Gradient check of the full-size multi-resolution loss along random directions.

    The full-resolution loss has too many inputs for elementwise finite
    differences, so the analytic gradient is compared with central
    differences along a handful of random unit directions.
    """
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((1, length)), rng.standard_normal((1, length))
    tb = Tensor(b.copy(), requires_grad=True)
    multi_stft_loss(Tensor(a), tb).backward()
    worst, h = 0.0, 1e-5
    for _ in range(4):
        d = rng.standard_normal(b.shape)
        d /= np.linalg.norm(d)
        with no_grad():
            fp = multi_stft_loss(Tensor(a), Tensor(b + h * d)).item()
            fm = multi_stft_loss(Tensor(a), Tensor(b - h * d)).item()
        numeric = (fp - fm) / (2 * h)
        analytic = float((tb.grad * d).sum())
        worst = max(worst, abs(numeric - analytic) / max(abs(numeric), abs(analytic), 1e-12))
    return worst
