"""Central finite-difference gradient checking."""

from __future__ import annotations

import numpy as np

from .core import Tensor, no_grad


def numerical_gradient(fn, arrays, index, h=1e-5):
    """Central differences of scalar ``fn(*arrays)`` w.r.t. ``arrays[index]``."""
    x = arrays[index]
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = fn(*arrays)
        flat[i] = orig - h
        fm = fn(*arrays)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(a, b):
    """``||a - b|| / max(||a||, ||b||)``; zero when both vanish."""
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / scale)


def gradcheck(op, inputs, h=1e-5, seed=0):
    """Compare backprop against finite differences for ``op(*tensors)``.

    The output is reduced to a scalar with a fixed random projection so every
    output element contributes.  Returns the worst relative error over inputs.
    """
    inputs = [np.array(a, dtype=np.float64) for a in inputs]
    with no_grad():
        out_shape = op(*[Tensor(a) for a in inputs]).shape
    proj = np.random.default_rng(seed).standard_normal(out_shape)

    def scalar(*arrays):
        with no_grad():
            return float((op(*[Tensor(a) for a in arrays]).data * proj).sum())

    tensors = [Tensor(a.copy(), requires_grad=True) for a in inputs]
    op(*tensors).backward(proj)
    worst = 0.0
    for i, t in enumerate(tensors):
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = numerical_gradient(scalar, inputs, i, h)
        worst = max(worst, relative_error(analytic, numeric))
    return worst
