"""Layer-level differentiable ops on ``[batch, channels, time]`` tensors.

Each op has a fused numpy forward and a hand-written backward.  2-D inputs
``[channels, time]`` are accepted and treated as a batch of one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DimensionError, NumericError
from .core import as_tensor, make, reshape

LAYER_NORM_EPS = 1e-5
WEIGHT_NORM_EPS = 1e-12


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel_size: int
    dilation: int = 1
    stride: int = 1
    causal: bool = True
    weight_normalized: bool = False

    def __post_init__(self):
        if self.in_channels < 1 or self.out_channels < 1:
            raise ConfigError(f"channel counts must be positive: {self}")
        if self.kernel_size < 1 or self.dilation < 1 or self.stride < 1:
            raise ConfigError(f"kernel_size, dilation and stride must be >= 1: {self}")

    @property
    def weight_shape(self):
        return (self.out_channels, self.in_channels, self.kernel_size)

    @property
    def left_padding(self):
        return (self.kernel_size - 1) * self.dilation


def _batch_outer(a, b):
    """``sum_b a[b] @ b[b].T`` without materializing transposed copies."""
    out = a[0] @ b[0].T
    for i in range(1, a.shape[0]):
        out += a[i] @ b[i].T
    return out


def _batched(x):
    x = as_tensor(x)
    if x.ndim == 2:
        return reshape(x, (1,) + x.shape), True
    if x.ndim != 3:
        raise DimensionError(f"expected [C, T] or [B, C, T] input, got shape {x.shape}")
    return x, False


def _unbatch(y, squeeze):
    return reshape(y, y.shape[1:]) if squeeze else y


def _check_weights(spec, weight, bias, x_channels):
    if tuple(weight.shape) != spec.weight_shape:
        raise DimensionError(f"weight shape {weight.shape} does not match {spec.weight_shape}")
    if bias is not None and tuple(bias.shape) != (spec.out_channels,):
        raise DimensionError(f"bias shape {bias.shape} != ({spec.out_channels},)")
    if x_channels != spec.in_channels:
        raise DimensionError(f"input has {x_channels} channels, layer expects {spec.in_channels}")


def conv1d(x, weight, bias=None, stride=1, dilation=1, pad_left=0, pad_right=0):
    """Zero-padded 1-D convolution (cross-correlation) via im2col."""
    x, squeeze = _batched(x)
    weight = as_tensor(weight)
    bias = None if bias is None else as_tensor(bias)
    B, cin, T = x.shape
    cout, wcin, k = weight.shape
    if wcin != cin:
        raise DimensionError(f"input has {cin} channels, weight expects {wcin}")

    Tp = T + pad_left + pad_right
    span = (k - 1) * dilation + 1
    t_out = (Tp - span) // stride + 1
    if t_out < 1:
        raise DimensionError(f"input length {T} too short for kernel span {span}")

    # im2col straight from the unpadded input; padded taps stay zero
    cols = np.zeros((B, cin, k, t_out)) if pad_left or pad_right else np.empty((B, cin, k, t_out))
    taps = []
    for j in range(k):
        off = j * dilation - pad_left  # input index read by output 0 at tap j
        lo = -(off // stride) if off < 0 else 0
        hi = min(t_out, (T - 1 - off) // stride + 1) if off <= T - 1 else 0
        taps.append((off, lo, hi))
        if hi > lo:
            start = off + lo * stride
            cols[:, :, j, lo:hi] = x.data[:, :, start : start + (hi - lo - 1) * stride + 1 : stride]
    cols = cols.reshape(B, cin * k, t_out)
    w2 = weight.data.reshape(cout, cin * k)
    out = np.matmul(w2, cols)
    if bias is not None:
        out += bias.data[:, None]

    def backward(g):
        gw = gx = gb = None
        if weight.requires_grad:
            gw = _batch_outer(g, cols).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2))
        if x.requires_grad:
            dcols = np.matmul(w2.T, g).reshape(B, cin, k, t_out)
            gx = np.zeros_like(x.data)
            for j, (off, lo, hi) in enumerate(taps):
                if hi > lo:
                    start = off + lo * stride
                    gx[:, :, start : start + (hi - lo - 1) * stride + 1 : stride] += dcols[:, :, j, lo:hi]
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    y = make(out, parents, backward)
    return _unbatch(y, squeeze)


def causal_conv1d(x, spec: ConvSpec, weight, bias=None):
    """Causal dilated convolution; output length equals input length.

    Output column ``t`` only sees input columns ``<= t`` because the input is
    left-padded with ``(kernel_size - 1) * dilation`` zeros.  Tap ``j`` of the
    kernel weights input ``t - j * dilation``, so ``[0, 1]`` is a one-sample delay.
    """
    if not spec.causal:
        raise ConfigError("causal_conv1d requires spec.causal")
    if spec.stride != 1:
        raise ConfigError("causal_conv1d is length-preserving; stride must be 1")
    xb = as_tensor(x)
    _check_weights(spec, weight, bias, xb.shape[-2])
    flipped = as_tensor(weight)[:, :, ::-1]
    return conv1d(x, flipped, bias, stride=1, dilation=spec.dilation, pad_left=spec.left_padding)


def conv_transpose1d_nonoverlap(x, spec: ConvSpec, weight, bias=None):
    """Transposed convolution with ``stride == kernel_size``.

    ``weight`` is laid out ``[out, in, kernel]``.  Output block
    ``[t*stride, (t+1)*stride)`` is a linear function of input column ``t`` only.
    """
    if spec.stride != spec.kernel_size:
        raise ConfigError(
            f"non-overlapping transposed conv needs stride == kernel_size, got {spec.stride} != {spec.kernel_size}"
        )
    x, squeeze = _batched(x)
    weight = as_tensor(weight)
    bias = None if bias is None else as_tensor(bias)
    _check_weights(spec, weight, bias, x.shape[1])
    B, cin, T = x.shape
    cout, s = spec.out_channels, spec.stride

    w2 = weight.data.transpose(0, 2, 1).reshape(cout * s, cin)
    out = np.matmul(w2, x.data).reshape(B, cout, s, T).transpose(0, 1, 3, 2).reshape(B, cout, T * s)
    if bias is not None:
        out = out + bias.data[:, None]

    def backward(g):
        g4 = g.reshape(B, cout, T, s).transpose(0, 1, 3, 2).reshape(B, cout * s, T)
        gx = gw = gb = None
        if x.requires_grad:
            gx = np.matmul(w2.T, g4)
        if weight.requires_grad:
            gw = _batch_outer(g4, x.data).reshape(cout, s, cin).transpose(0, 2, 1)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2))
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _unbatch(make(np.ascontiguousarray(out), parents, backward), squeeze)


def linear_1x1(x, weight, bias=None):
    """Per-time-step channel mix; ``weight`` is ``[out, in]``."""
    x, squeeze = _batched(x)
    weight = as_tensor(weight)
    bias = None if bias is None else as_tensor(bias)
    if weight.ndim != 2 or weight.shape[1] != x.shape[1]:
        raise DimensionError(f"weight {weight.shape} incompatible with input {x.shape}")
    out = np.matmul(weight.data, x.data)
    if bias is not None:
        out += bias.data[:, None]

    def backward(g):
        gx = np.matmul(weight.data.T, g) if x.requires_grad else None
        gw = _batch_outer(g, x.data) if weight.requires_grad else None
        gb = g.sum(axis=(0, 2)) if bias is not None and bias.requires_grad else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _unbatch(make(out, parents, backward), squeeze)


def layer_norm(x, gain, bias, eps=LAYER_NORM_EPS):
    """Normalize over channels independently at every time step."""
    x, squeeze = _batched(x)
    gain, bias = as_tensor(gain), as_tensor(bias)
    C = x.shape[1]
    if gain.shape != (C,) or bias.shape != (C,):
        raise DimensionError(f"gain/bias must have shape ({C},)")
    mu = x.data.mean(axis=1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data[:, None] + bias.data[:, None]

    def backward(g):
        gx = ggain = gbias = None
        if x.requires_grad:
            dxhat = g * gain.data[:, None]
            gx = inv * (
                dxhat
                - dxhat.mean(axis=1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=1, keepdims=True)
            )
        if gain.requires_grad:
            ggain = (g * xhat).sum(axis=(0, 2))
        if bias.requires_grad:
            gbias = g.sum(axis=(0, 2))
        return gx, ggain, gbias

    return _unbatch(make(out, (x, gain, bias), backward), squeeze)


def weight_norm_reparam(direction, magnitude, eps=WEIGHT_NORM_EPS):
    """``magnitude * direction / ||direction||`` with one norm per output channel (axis 0)."""
    v, g = as_tensor(direction), as_tensor(magnitude)
    if g.shape != (v.shape[0],):
        raise DimensionError(f"magnitude shape {g.shape} must be ({v.shape[0]},)")
    axes = tuple(range(1, v.ndim))
    norm = np.sqrt((v.data * v.data).sum(axis=axes))
    bad = np.flatnonzero(norm < eps)
    if bad.size:
        raise NumericError(
            f"weight-norm direction has norm < {eps:g} for output channels {bad.tolist()}"
        )
    bshape = (-1,) + (1,) * (v.ndim - 1)
    vhat = v.data / norm.reshape(bshape)
    out = g.data.reshape(bshape) * vhat

    def backward(grad):
        proj = (grad * vhat).sum(axis=axes)
        gv = None
        if v.requires_grad:
            gv = (g.data / norm).reshape(bshape) * (grad - vhat * proj.reshape(bshape))
        gg = proj if g.requires_grad else None
        return gv, gg

    return make(out, (v, g), backward)


def avg_pool1d(x, factor):
    """Non-overlapping mean over ``factor``-sized blocks; a ragged tail is dropped."""
    x, squeeze = _batched(x)
    if factor == 1:
        return _unbatch(x, squeeze)
    B, C, T = x.shape
    n = T // factor
    if n < 1:
        raise DimensionError(f"length {T} shorter than pooling factor {factor}")
    out = x.data[:, :, : n * factor].reshape(B, C, n, factor).mean(axis=3)

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[:, :, : n * factor] = np.repeat(g / factor, factor, axis=2)
        return (gx,)

    return _unbatch(make(out, (x,), backward), squeeze)


def stft_magnitude(x, fft_size, hop_length, window):
    """Magnitude STFT of ``[B, T]`` signals, returned as ``[B, frames, fft_size//2+1]``.

    Frame ``t`` covers samples ``[t*hop, t*hop + len(window))``; no centering.
    """
    x = as_tensor(x)
    if x.ndim == 1:
        x = reshape(x, (1, x.shape[0]))
    if x.ndim != 2:
        raise DimensionError(f"expected [B, T] signal, got {x.shape}")
    window = np.asarray(window, dtype=np.float64)
    win = window.shape[0]
    if win > fft_size:
        raise ConfigError("window longer than fft_size")
    B, T = x.shape
    if T < win:
        raise DimensionError(f"signal of {T} samples shorter than window {win}")
    n_frames = (T - win) // hop_length + 1
    idx = hop_length * np.arange(n_frames)[:, None] + np.arange(win)[None, :]
    frames = x.data[:, idx] * window
    spec = np.fft.rfft(frames, n=fft_size, axis=-1)
    mag = np.abs(spec)

    def backward(g):
        safe = np.where(mag > 0, mag, 1.0)
        G = np.where(mag > 0, g / safe, 0.0) * spec
        G[..., 1 : fft_size // 2] *= 0.5
        dframes = np.fft.irfft(G, n=fft_size, axis=-1)[..., :win] * (fft_size * window)
        gx = np.empty((B, T))
        flat = idx.ravel()
        for b in range(B):
            gx[b] = np.bincount(flat, weights=dframes[b].ravel(), minlength=T)
        return (gx,)

    return make(mag, (x,), backward)
