"""Adam with bias correction, operating on named parameter dictionaries."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ADAM_LR = 3e-4
ADAM_BETAS = (0.5, 0.9)
ADAM_EPS = 1e-8


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state, lr=ADAM_LR, beta1=ADAM_BETAS[0], beta2=ADAM_BETAS[1], eps=ADAM_EPS):
    """Apply one in-place Adam update to ``params`` (name -> Tensor).

    ``grads`` maps the same names to arrays; missing or ``None`` entries are
    treated as zero gradients.
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state


class Adam:
    """Thin stateful wrapper binding a parameter dict to :func:`adam_step`."""

    def __init__(self, params, lr=ADAM_LR, betas=ADAM_BETAS, eps=ADAM_EPS):
        self.params = params
        self.lr = lr
        self.betas = tuple(betas)
        self.eps = eps
        self.state = AdamState()

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self):
        grads = {k: p.grad for k, p in self.params.items()}
        adam_step(self.params, grads, self.state, self.lr, self.betas[0], self.betas[1], self.eps)

    def state_tensors(self, prefix):
        out = {}
        for name in self.params:
            if name in self.state.m:
                out[f"{prefix}.m.{name}"] = self.state.m[name]
                out[f"{prefix}.v.{name}"] = self.state.v[name]
        return out

    def load_state_tensors(self, tensors, prefix, step):
        self.state = AdamState(step=int(step))
        for name in self.params:
            key = f"{prefix}.m.{name}"
            if key in tensors:
                self.state.m[name] = np.array(tensors[key], dtype=np.float64)
                self.state.v[name] = np.array(tensors[f"{prefix}.v.{name}"], dtype=np.float64)
