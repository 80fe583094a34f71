import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from plaae.errors import ConfigError
from plaae.losses import (
    DEFAULT_RESOLUTIONS,
    MAG_FLOOR,
    SC_EPS,
    MultiStftConfig,
    StftResolution,
    generator_total_loss,
    log_magnitude_loss,
    lsgan_discriminator_loss,
    lsgan_generator_adv_loss,
    multi_stft_loss,
    spectral_convergence,
)
from plaae.tensor import Tensor, gradcheck

from conftest import speechlike

RES = StftResolution(256, 64, 128)


def mags(x, res):
    """Brute-force magnitude spectrogram, frames along axis 0."""
    w = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(res.window_length) / res.window_length)
    n = (len(x) - res.window_length) // res.hop_length + 1
    return np.array([np.abs(np.fft.rfft(x[i * res.hop_length : i * res.hop_length + res.window_length] * w,
                                        res.fft_size)) for i in range(n)])


def sc_oracle(ref, est, res):
    R, E = mags(ref, res), mags(est, res)
    return np.sqrt(np.sum((R - E) ** 2)) / max(np.sqrt(np.sum(R**2)), SC_EPS)


def mag_oracle(ref, est, res):
    R, E = mags(ref, res), mags(est, res)
    return np.mean(np.abs(np.log(np.maximum(R, MAG_FLOOR)) - np.log(np.maximum(E, MAG_FLOOR))))


def test_reference_resolutions():
    assert [(r.fft_size, r.hop_length, r.window_length) for r in DEFAULT_RESOLUTIONS] == [
        (1024, 120, 600), (2048, 240, 1200), (512, 50, 240)]
    assert MultiStftConfig().alpha == 1.0
    with pytest.raises(ConfigError):
        MultiStftConfig(resolutions=())
    with pytest.raises(ConfigError):
        MultiStftConfig(alpha=-1)


def test_lsgan_discriminator_examples():
    ones, zeros = np.ones((2, 1, 5)), np.zeros((2, 1, 5))
    assert lsgan_discriminator_loss([ones] * 3, [zeros] * 3).item() == 0.0
    assert lsgan_discriminator_loss([zeros] * 3, [zeros] * 3).item() == 0.5


def test_lsgan_generator_examples():
    assert lsgan_generator_adv_loss([np.ones(4)]).item() == 0.0
    assert lsgan_generator_adv_loss([np.zeros(4)]).item() == 1.0


@given(seed=st.integers(0, 9999))
def test_lsgan_formula_oracle(seed):
    r = np.random.default_rng(seed)
    real = [r.standard_normal((2, 1, n)) for n in (40, 10, 3)]
    fake = [r.standard_normal((2, 1, n)) for n in (40, 10, 3)]
    d = np.mean([0.5 * np.mean((a - 1) ** 2) + 0.5 * np.mean(b**2) for a, b in zip(real, fake)])
    g = np.mean([np.mean((b - 1) ** 2) for b in fake])
    assert lsgan_discriminator_loss(real, fake).item() == pytest.approx(d, rel=1e-12)
    assert lsgan_generator_adv_loss(fake).item() == pytest.approx(g, rel=1e-12)


def test_spectral_convergence_examples():
    x = speechlike(1600)
    assert spectral_convergence(x, x, RES).item() == 0.0
    assert spectral_convergence(x, 2 * x, RES).item() == pytest.approx(1.0, rel=1e-12)
    # silent reference: epsilon-guarded denominator stays finite
    assert np.isfinite(spectral_convergence(np.zeros(1600), x, RES).item())


def test_log_magnitude_examples():
    x = speechlike(1600)
    assert log_magnitude_loss(x, x, RES).item() == 0.0
    # bins near the floor are excluded from the unit-shift identity
    R = mags(x, RES)
    assert R.min() > MAG_FLOOR
    assert log_magnitude_loss(x, np.e * x, RES).item() == pytest.approx(1.0, rel=1e-12)


@given(seed=st.integers(0, 9999))
def test_single_resolution_oracles(seed):
    r = np.random.default_rng(seed)
    a, b = r.standard_normal(700), r.standard_normal(700)
    assert spectral_convergence(a, b, RES).item() == pytest.approx(sc_oracle(a, b, RES), rel=1e-10)
    assert log_magnitude_loss(a, b, RES).item() == pytest.approx(mag_oracle(a, b, RES), rel=1e-10)


def test_multi_stft_identities(rng):
    a, b = rng.standard_normal(3000), rng.standard_normal(3000)
    assert multi_stft_loss(a, a).item() == 0.0
    one = MultiStftConfig(resolutions=(RES,))
    assert multi_stft_loss(a, b, one).item() == pytest.approx(
        spectral_convergence(a, b, RES).item() + log_magnitude_loss(a, b, RES).item(), rel=1e-14)
    per = [sc_oracle(a, b, r) + mag_oracle(a, b, r) for r in DEFAULT_RESOLUTIONS]
    assert multi_stft_loss(a, b).item() == pytest.approx(np.mean(per), rel=1e-10)


def test_multi_stft_order_invariant(rng):
    a, b = rng.standard_normal(3000), rng.standard_normal(3000)
    fwd = multi_stft_loss(a, b, MultiStftConfig(DEFAULT_RESOLUTIONS)).item()
    rev = multi_stft_loss(a, b, MultiStftConfig(DEFAULT_RESOLUTIONS[::-1])).item()
    assert fwd == rev


def test_generator_total(rng):
    a, b = rng.standard_normal(3000), rng.standard_normal(3000)
    fake = [rng.standard_normal((1, 1, 30))]
    adv = lsgan_generator_adv_loss(fake).item()
    assert generator_total_loss(a, b, fake, MultiStftConfig(alpha=0.0)).item() == adv
    total = generator_total_loss(a, b, fake).item()
    assert total == pytest.approx(adv + multi_stft_loss(a, b).item(), rel=1e-14)
    half = generator_total_loss(a, b, fake, MultiStftConfig(alpha=0.5)).item()
    assert half == pytest.approx(adv + 0.5 * multi_stft_loss(a, b).item(), rel=1e-14)


@given(seed=st.integers(0, 9999))
def test_losses_non_negative(seed):
    r = np.random.default_rng(seed)
    a, b = r.standard_normal(800), r.standard_normal(800)
    assert multi_stft_loss(a, b, MultiStftConfig((RES,))).item() >= 0
    assert lsgan_discriminator_loss([a], [b]).item() >= 0


def test_multi_stft_gradient_reaches_samples(rng):
    a, b = rng.standard_normal((1, 400)), rng.standard_normal((1, 400))
    cfg = MultiStftConfig((StftResolution(64, 16, 32),))
    err = gradcheck(lambda e: multi_stft_loss(Tensor(a), e, cfg), [b])
    assert err < 1e-4
