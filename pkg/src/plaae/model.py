"""PLAAE generator (causal encoder + upsampling decoder) and multi-rate discriminators."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Dict

import numpy as np

from . import HOP_LENGTH, SAMPLE_RATE
from .dsp import AudioBuffer, MelConfig, causal_pad, mel_spectrogram
from .errors import ConfigError, DimensionError, LengthError
from .packetsim import LossMask, flag_frames, packetize
from .tensor import (
    ConvSpec,
    Tensor,
    avg_pool1d,
    causal_conv1d,
    conv1d,
    conv_transpose1d_nonoverlap,
    layer_norm,
    leaky_relu,
    linear_1x1,
    no_grad,
    relu,
    tanh,
    weight_norm_reparam,
)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class EncoderConfig:
    n_blocks: int = 5
    kernel_size: int = 3
    dilation_base: int = 3
    input_channels: int = 81
    hidden_channels: int = 128
    embedding_dim: int = 128

    def dilations(self):
        return [self.dilation_base**i for i in range(self.n_blocks)]


@dataclass(frozen=True)
class DecoderConfig:
    strides: tuple = (5, 4, 4, 2)
    residual_layers_per_block: tuple = (1, 2, 3, 4)
    residual_channels: object = 64  # int, or one width per block
    kernel_size: int = 3
    dilation_base: int = 3
    leaky_slope: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "strides", tuple(int(s) for s in self.strides))
        object.__setattr__(self, "residual_layers_per_block", tuple(int(n) for n in self.residual_layers_per_block))
        if not isinstance(self.residual_channels, int):
            object.__setattr__(self, "residual_channels", tuple(int(c) for c in self.residual_channels))
        if len(self.residual_layers_per_block) != len(self.strides):
            raise ConfigError("residual_layers_per_block needs one entry per decoder block")
        if len(self.widths()) != len(self.strides):
            raise ConfigError("residual_channels needs one entry per decoder block")

    @property
    def n_blocks(self):
        return len(self.strides)

    @property
    def upsampling(self):
        return int(np.prod(self.strides))

    def widths(self):
        if isinstance(self.residual_channels, int):
            return (self.residual_channels,) * len(self.strides)
        return self.residual_channels


@dataclass(frozen=True)
class DiscriminatorConfig:
    kernel_sizes: tuple = (15, 41, 41, 41, 5, 3)
    strides: tuple = (1, 4, 4, 4, 1, 1)
    channels: tuple = (16, 32, 64, 64, 64)
    leaky_slope: float = 0.2
    pooling_factors: tuple = (1, 4, 16)

    def __post_init__(self):
        for name in ("kernel_sizes", "strides", "channels", "pooling_factors"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
        if not (len(self.kernel_sizes) == len(self.strides) == len(self.channels) + 1):
            raise ConfigError("discriminator needs len(kernel_sizes) == len(strides) == len(channels) + 1")


@dataclass(frozen=True)
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    n_mels: int = 80
    hop_length: int = HOP_LENGTH
    sample_rate: int = SAMPLE_RATE
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.decoder.upsampling != self.hop_length:
            raise ConfigError(
                f"decoder strides {self.decoder.strides} upsample by {self.decoder.upsampling}, "
                f"front-end hop is {self.hop_length}"
            )
        if self.encoder.input_channels != self.n_mels + 1:
            raise ConfigError("encoder input_channels must be n_mels + 1 (loss flag row)")

    def to_dict(self):
        d = asdict(self)
        d["decoder"]["strides"] = list(self.decoder.strides)
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        version = d.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported model config schema_version {version}")
        return cls(
            encoder=EncoderConfig(**d.pop("encoder", {})),
            decoder=DecoderConfig(**d.pop("decoder", {})),
            discriminator=DiscriminatorConfig(**d.pop("discriminator", {})),
            **d,
        )


@dataclass(frozen=True)
class ReceptiveField:
    frames: int
    seconds: float


def receptive_field(config) -> ReceptiveField:
    """Frames of past input visible to one embedding column: ``1 + (k-1) * sum(dilations)``."""
    enc = config.encoder if isinstance(config, ModelConfig) else config
    hop = config.hop_length if isinstance(config, ModelConfig) else HOP_LENGTH
    rate = config.sample_rate if isinstance(config, ModelConfig) else SAMPLE_RATE
    frames = 1 + (enc.kernel_size - 1) * sum(enc.dilations())
    return ReceptiveField(frames, frames * hop / rate)


# -- parameter containers -----------------------------------------------------

def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Holds named parameter tensors; subclasses register them in ``self.params``."""

    def __init__(self):
        self.params: Dict[str, Tensor] = {}

    def _add(self, name, value):
        t = Tensor(value, requires_grad=True, name=name)
        self.params[name] = t
        return t

    def _conv(self, rng, name, shape, weight_norm, bias=True):
        fan_in = shape[1] * (shape[2] if len(shape) > 2 else 1)
        w = _uniform(rng, shape, fan_in)
        if weight_norm:
            self._add(f"{name}.v", w)
            axes = tuple(range(1, w.ndim))
            self._add(f"{name}.g", np.sqrt((w * w).sum(axis=axes)))
        else:
            self._add(f"{name}.weight", w)
        if bias:
            self._add(f"{name}.bias", _uniform(rng, (shape[0],), fan_in))

    def weight(self, name):
        if f"{name}.v" in self.params:
            return weight_norm_reparam(self.params[f"{name}.v"], self.params[f"{name}.g"])
        return self.params[f"{name}.weight"]

    def bias(self, name):
        return self.params.get(f"{name}.bias")

    def parameter_count(self):
        return int(sum(p.data.size for p in self.params.values()))

    def state_dict(self):
        return {k: p.data.copy() for k, p in self.params.items()}

    def load_state_dict(self, arrays, strict=True):
        missing = [k for k in self.params if k not in arrays]
        if strict and missing:
            raise KeyError(f"missing parameters: {missing[:5]}")
        for k, p in self.params.items():
            if k in arrays:
                a = np.asarray(arrays[k], dtype=np.float64)
                if a.shape != p.data.shape:
                    raise DimensionError(f"{k}: stored shape {a.shape} != {p.data.shape}")
                p.data = a.copy()

    def set_requires_grad(self, flag):
        for p in self.params.values():
            p.requires_grad = flag
            if not flag:
                p.grad = None


class Encoder(Module):
    """LayerNorm -> causal dilated conv -> ReLU blocks, then a 1x1 projection."""

    def __init__(self, cfg: EncoderConfig, rng):
        super().__init__()
        self.cfg = cfg
        self.specs = []
        cin = cfg.input_channels
        for i, d in enumerate(cfg.dilations()):
            spec = ConvSpec(cin, cfg.hidden_channels, cfg.kernel_size, dilation=d)
            self.specs.append(spec)
            self._add(f"enc.block{i}.ln.gain", np.ones(cin))
            self._add(f"enc.block{i}.ln.bias", np.zeros(cin))
            self._conv(rng, f"enc.block{i}.conv", spec.weight_shape, weight_norm=False)
            cin = cfg.hidden_channels
        self._conv(rng, "enc.proj", (cfg.embedding_dim, cin), weight_norm=False)

    def __call__(self, features):
        h = features
        for i, spec in enumerate(self.specs):
            p = f"enc.block{i}"
            h = layer_norm(h, self.params[f"{p}.ln.gain"], self.params[f"{p}.ln.bias"])
            h = relu(causal_conv1d(h, spec, self.weight(f"{p}.conv"), self.bias(f"{p}.conv")))
        return linear_1x1(h, self.weight("enc.proj"), self.bias("enc.proj"))


class Decoder(Module):
    """Non-overlapping transposed-conv upsampling blocks with causal residual stacks.

    Every learnable layer is weight-normalized.  A residual layer computes
    ``h + W_1x1 act(causal_conv(act(h)))`` with dilation ``base**l``.
    """

    def __init__(self, cfg: DecoderConfig, embedding_dim, rng):
        super().__init__()
        self.cfg = cfg
        self.up_specs, self.res_specs = [], []
        cin = embedding_dim
        for m, (stride, n_res, width) in enumerate(zip(cfg.strides, cfg.residual_layers_per_block, cfg.widths())):
            up = ConvSpec(cin, width, stride, stride=stride, weight_normalized=True)
            self.up_specs.append(up)
            self._conv(rng, f"dec.block{m}.up", up.weight_shape, weight_norm=True)
            specs = []
            for l in range(n_res):
                spec = ConvSpec(width, width, cfg.kernel_size, dilation=cfg.dilation_base**l, weight_normalized=True)
                specs.append(spec)
                self._conv(rng, f"dec.block{m}.res{l}.conv", spec.weight_shape, weight_norm=True)
                self._conv(rng, f"dec.block{m}.res{l}.proj", (width, width), weight_norm=True)
            self.res_specs.append(specs)
            cin = width
        self._conv(rng, "dec.out", (1, cin), weight_norm=True)

    def __call__(self, embeddings):
        slope = self.cfg.leaky_slope
        h = embeddings
        for m, up in enumerate(self.up_specs):
            p = f"dec.block{m}"
            h = conv_transpose1d_nonoverlap(leaky_relu(h, slope), up, self.weight(f"{p}.up"), self.bias(f"{p}.up"))
            for l, spec in enumerate(self.res_specs[m]):
                r = f"{p}.res{l}"
                y = causal_conv1d(leaky_relu(h, slope), spec, self.weight(f"{r}.conv"), self.bias(f"{r}.conv"))
                h = h + linear_1x1(leaky_relu(y, slope), self.weight(f"{r}.proj"), self.bias(f"{r}.proj"))
        return tanh(linear_1x1(leaky_relu(h, slope), self.weight("dec.out"), self.bias("dec.out")))


class PlaaeModel(Module):
    """Generator: log-mel + loss-flag features in, waveform out, causal end to end."""

    def __init__(self, config: ModelConfig = ModelConfig(), seed=0):
        super().__init__()
        self.config = config
        rng = np.random.default_rng(seed)
        self.encoder = Encoder(config.encoder, rng)
        self.decoder = Decoder(config.decoder, config.encoder.embedding_dim, rng)
        self.params = {**self.encoder.params, **self.decoder.params}
        self.mel = MelConfig(n_mels=config.n_mels, sample_rate=config.sample_rate)

    def encode(self, features):
        f = features if isinstance(features, Tensor) else Tensor(features)
        if f.shape[-2] != self.config.encoder.input_channels:
            raise ConfigError(f"expected {self.config.encoder.input_channels} feature channels, got {f.shape[-2]}")
        return self.encoder(f)

    def decode(self, embeddings):
        """``[.., E, F]`` embeddings to ``[.., 1, F * hop]`` samples in [-1, 1]."""
        e = embeddings if isinstance(embeddings, Tensor) else Tensor(embeddings)
        return self.decoder(e)

    def __call__(self, features):
        y = self.decode(self.encode(features))
        return y.reshape(y.shape[:-2] + (y.shape[-1],))

    def features(self, lossy, mask: LossMask):
        """``[81, frames]`` model input for a zero-filled signal whose length is a multiple of hop."""
        x = lossy.samples if isinstance(lossy, AudioBuffer) else np.asarray(lossy, dtype=np.float64)
        hop = self.config.hop_length
        if x.shape[0] % hop:
            raise LengthError(f"feature extraction needs a multiple of {hop} samples, got {x.shape[0]}")
        pad = causal_pad(self.mel.stft)
        logmel = mel_spectrogram(x, self.mel, pad_left=pad)
        flags = flag_frames(mask, logmel.shape[1], self.mel.stft, pad_left=pad)
        return np.vstack([logmel, flags[None, :]])


class Discriminator(Module):
    """MelGAN-style strided conv stack ending in an unbounded score map."""

    def __init__(self, cfg: DiscriminatorConfig, rng, prefix):
        super().__init__()
        self.cfg = cfg
        self.prefix = prefix
        cin = 1
        outs = list(cfg.channels) + [1]
        for i, (k, cout) in enumerate(zip(cfg.kernel_sizes, outs)):
            self._conv(rng, f"{prefix}.layer{i}", (cout, cin, k), weight_norm=True)
            cin = cout

    def __call__(self, x):
        h = x
        last = len(self.cfg.kernel_sizes) - 1
        for i, (k, s) in enumerate(zip(self.cfg.kernel_sizes, self.cfg.strides)):
            name = f"{self.prefix}.layer{i}"
            pad = (k - 1) // 2
            h = conv1d(h, self.weight(name), self.bias(name), stride=s, pad_left=pad, pad_right=pad)
            if i < last:
                h = leaky_relu(h, self.cfg.leaky_slope)
        return h


class DiscriminatorSet(Module):
    """Structurally identical discriminators fed average-pooled copies of the input."""

    def __init__(self, cfg: DiscriminatorConfig = DiscriminatorConfig(), seed=1):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        self.discriminators = [Discriminator(cfg, rng, f"disc{f}") for f in cfg.pooling_factors]
        for d in self.discriminators:
            self.params.update(d.params)

    def pooled_inputs(self, audio):
        x = audio if isinstance(audio, Tensor) else Tensor(np.asarray(audio, dtype=np.float64))
        if x.ndim == 1:
            x = x.reshape(1, 1, x.shape[0])
        elif x.ndim == 2:
            x = x.reshape(x.shape[0], 1, x.shape[1])
        return [avg_pool1d(x, f) for f in self.cfg.pooling_factors]

    def __call__(self, audio):
        """Score maps ``[B, 1, T_k]`` from each discriminator."""
        return [d(x) for d, x in zip(self.discriminators, self.pooled_inputs(audio))]


def parameter_count(config: ModelConfig, include_discriminators=False):
    n = PlaaeModel(config).parameter_count()
    if include_discriminators:
        n += DiscriminatorSet(config.discriminator).parameter_count()
    return n


def conceal_forward(model: PlaaeModel, lossy: AudioBuffer, mask: LossMask) -> AudioBuffer:
    """Single non-autoregressive pass over a zero-filled signal.

    Lost packets stay zero in the input (earlier predictions are never fed
    back), and every gap is predicted in the same pass.  The signal is padded
    to whole frames and the output trimmed back to the input length.
    """
    x = lossy.samples
    count, _ = packetize(lossy, mask.packet_length)
    if count != len(mask):
        raise LengthError(f"mask covers {len(mask)} packets, signal holds {count}")
    hop = model.config.hop_length
    n = x.shape[0]
    if n == 0:
        return AudioBuffer(np.zeros(0), lossy.sample_rate)
    padded = np.concatenate([x, np.zeros(-n % hop)])
    with no_grad():
        y = model(model.features(padded, mask))
    return AudioBuffer(y.data[:n].copy(), lossy.sample_rate)
