import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from plaae.model import DecoderConfig, DiscriminatorConfig, EncoderConfig, ModelConfig

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

TINY = ModelConfig(
    encoder=EncoderConfig(n_blocks=3, hidden_channels=12, embedding_dim=8),
    decoder=DecoderConfig(strides=(5, 4, 8), residual_layers_per_block=(1, 1, 2), residual_channels=6),
    discriminator=DiscriminatorConfig(channels=(4, 4, 4, 4, 4)),
)


@pytest.fixture
def tiny_config():
    return TINY


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def speechlike(n, seed=0, f0=140.0, sr=16000):
    """Deterministic harmonic test signal with a little noise."""
    r = np.random.default_rng(seed)
    t = np.arange(n) / sr
    x = sum(np.sin(2 * np.pi * f0 * k * t + r.uniform(0, 2 * np.pi)) / k for k in range(1, 8))
    x = x + 0.05 * r.standard_normal(n)
    return 0.5 * x / np.max(np.abs(x))


# one line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def record_acceptance(number, passed, detail):
    ACCEPTANCE[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
