"""Dense float64 tensors with tape-free reverse-mode differentiation.

Every operation returns a new :class:`Tensor` that remembers its parents and a
closure mapping the output gradient to parent gradients.  ``Tensor.backward``
walks the graph in reverse topological order and accumulates gradients on
leaves only, so intermediate buffers can be freed as soon as the pass ends.
"""

from __future__ import annotations

import contextlib
import threading

import numpy as np

DTYPE = np.float64

_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable graph construction in the current thread."""
    prev = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    """A numpy array plus the bookkeeping needed for backpropagation."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=None):
        arr = np.asarray(data, dtype=DTYPE)
        if not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self.name = name

    # -- introspection -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    # -- autodiff --------------------------------------------------------
    def backward(self, grad=None):
        """Backpropagate from this tensor; ``grad`` defaults to ones."""
        if not self.requires_grad:
            raise RuntimeError("backward() called on a tensor that does not require grad")
        if grad is None:
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=DTYPE)
        if grad.shape != self.shape:
            raise ValueError(f"gradient shape {grad.shape} != tensor shape {self.shape}")

        order = _topological_order(self)
        grads = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.grad is None:
                    node.grad = np.array(g, dtype=DTYPE, copy=True)
                else:
                    node.grad = node.grad + g
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- operator sugar --------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def _topological_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def make(data, parents, backward):
    """Wrap ``data`` as the output of an op with the given parents."""
    out = Tensor(data)
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# -- elementwise arithmetic ----------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return make(a.data + b.data, (a, b), backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)

    return make(a.data - b.data, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)

    return make(a.data * b.data, (a, b), backward)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def backward(g):
        return unbroadcast(g / b.data, a.shape), unbroadcast(-g * out / b.data, b.shape)

    return make(out, (a, b), backward)


def square(x):
    x = as_tensor(x)
    return make(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,))


def sqrt(x):
    """Square root; the gradient at exactly zero is taken as zero."""
    x = as_tensor(x)
    out = np.sqrt(x.data)

    def backward(g):
        pos = out > 0
        return (np.where(pos, g, 0.0) / (2.0 * np.where(pos, out, 1.0)),)

    return make(out, (x,), backward)


def log(x):
    x = as_tensor(x)
    return make(np.log(x.data), (x,), lambda g: (g / x.data,))


def absolute(x):
    x = as_tensor(x)
    return make(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


def clamp_min(x, floor):
    """``max(x, floor)``; the gradient is zero where the floor is active."""
    x = as_tensor(x)
    mask = x.data > floor
    return make(np.where(mask, x.data, floor), (x,), lambda g: (g * mask,))


# -- activations ---------------------------------------------------------

def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    return make(x.data * mask, (x,), lambda g: (g * mask,))


def leaky_relu(x, slope=0.2):
    x = as_tensor(x)
    if not 0.0 <= slope <= 1.0:
        raise ValueError("leaky_relu slope must lie in [0, 1]")

    def backward(g):
        return (g * np.where(x.data < 0, slope, 1.0),)

    return make(np.maximum(x.data, slope * x.data), (x,), backward)


def tanh(x):
    x = as_tensor(x)
    out = np.tanh(x.data)
    return make(out, (x,), lambda g: (g * (1.0 - out * out),))


# -- reductions and shape ------------------------------------------------

def tsum(x, axis=None, keepdims=False):
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return make(out, (x,), backward)


def mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return tsum(x, axis, keepdims) * (1.0 / count)


def reshape(x, shape):
    x = as_tensor(x)
    return make(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def getitem(x, index):
    x = as_tensor(x)

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return make(np.ascontiguousarray(x.data[index]), (x,), backward)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(tensors))
        )

    return make(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)
