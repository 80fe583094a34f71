"""Minimal reverse-mode tensor core for the PLAAE layer set."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .core import (
    Tensor,
    absolute,
    add,
    clamp_min,
    concat,
    div,
    is_grad_enabled,
    leaky_relu,
    log,
    mean,
    mul,
    no_grad,
    relu,
    reshape,
    sqrt,
    square,
    sub,
    tanh,
    tsum,
)
from .gradcheck import gradcheck, numerical_gradient, relative_error
from .nn import (
    ConvSpec,
    avg_pool1d,
    causal_conv1d,
    conv1d,
    conv_transpose1d_nonoverlap,
    layer_norm,
    linear_1x1,
    stft_magnitude,
    weight_norm_reparam,
)
from .optim import ADAM_BETAS, ADAM_EPS, ADAM_LR, Adam, AdamState, adam_step
