"""Reverse-mode automatic differentiation over numpy arrays.

Every operation records its parents and a closure mapping the output
adjoint to parent adjoints. ``grad`` walks the recorded graph once in
reverse topological order. Values are float64 throughout.
"""
from __future__ import annotations

import contextlib
import math

import numpy as np
from scipy.special import erf

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording the graph (inference)."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


class Tensor:
    __slots__ = ("value", "parents", "backward_fn")

    __array_priority__ = 100.0
    # make numpy operators defer to the reflected Tensor methods
    __array_ufunc__ = None

    def __init__(self, value, parents=(), backward_fn=None):
        self.value = np.asarray(value, dtype=np.float64)
        if _GRAD_ENABLED and parents:
            self.parents = parents
            self.backward_fn = backward_fn
        else:
            self.parents = ()
            self.backward_fn = None

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Tensor(shape={self.shape})"

    def numpy(self) -> np.ndarray:
        return self.value

    # arithmetic -------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(as_tensor(other), self)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return Tensor(a.value + b.value, (a, b),
                  lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def neg(a) -> Tensor:
    return Tensor(-a.value, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value
    return Tensor(av * bv, (a, b),
                  lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value
    out = av / bv
    return Tensor(out, (a, b),
                  lambda g: (_unbroadcast(g / bv, av.shape),
                             _unbroadcast(-g * out / bv, bv.shape)))


def power(a, exponent: float) -> Tensor:
    av = a.value
    return Tensor(av**exponent, (a,), lambda g: (g * exponent * av ** (exponent - 1),))


def square(a) -> Tensor:
    av = a.value
    return Tensor(av * av, (a,), lambda g: (2.0 * g * av,))


def sqrt(a) -> Tensor:
    out = np.sqrt(a.value)

    def backward(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(out > 0, 0.5 / np.where(out > 0, out, 1.0), 0.0)
        return (g * d,)

    return Tensor(out, (a,), backward)


def tanh(a) -> Tensor:
    out = np.tanh(a.value)
    return Tensor(out, (a,), lambda g: (g * (1.0 - out * out),))


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(a) -> Tensor:
    """Exact GELU, x * Phi(x)."""
    x = a.value
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    return Tensor(x * cdf, (a,),
                  lambda g: (g * (cdf + x * _INV_SQRT2PI * np.exp(-0.5 * x * x)),))


def identity(a) -> Tensor:
    return a


ACTIVATIONS = {"tanh": tanh, "gelu": gelu, "identity": identity}


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value
    if av.ndim < 2 or bv.ndim < 2:
        raise ValueError("matmul operands must be at least 2-d")

    def backward(g):
        ga = g @ np.swapaxes(bv, -1, -2)
        gb = np.swapaxes(av, -1, -2) @ g
        return _unbroadcast(ga, av.shape), _unbroadcast(gb, bv.shape)

    return Tensor(av @ bv, (a, b), backward)


def tsum(a, axis=None, keepdims=False) -> Tensor:
    shape = a.shape
    out = a.value.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return Tensor(out, (a,), backward)


def mean(a, axis=None, keepdims=False) -> Tensor:
    count = a.value.size if axis is None else np.prod(
        [a.shape[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis, keepdims) * (1.0 / count)


def reshape(a, shape) -> Tensor:
    old = a.shape
    return Tensor(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))
    return Tensor(a.value.transpose(axes), (a,), lambda g: (g.transpose(inverse),))


def getitem(a, index) -> Tensor:
    shape = a.shape

    def backward(g):
        out = np.zeros(shape)
        np.add.at(out, index, g)
        return (out,)

    return Tensor(a.value[index], (a,), backward)


def take(a, indices, axis: int) -> Tensor:
    """Gather along one axis with integer indices (repeats allowed)."""
    indices = np.asarray(indices)
    shape = a.shape
    axis = axis % a.ndim

    def backward(g):
        out = np.zeros(shape)
        moved = np.moveaxis(out, axis, 0)
        np.add.at(moved, indices, np.moveaxis(g, axis, 0))
        return (out,)

    return Tensor(np.take(a.value, indices, axis=axis), (a,), backward)


def concat(tensors, axis: int) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor(np.concatenate([t.value for t in tensors], axis=axis), tuple(tensors), backward)


def stack(tensors, axis: int) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return Tensor(np.stack([t.value for t in tensors], axis=axis), tuple(tensors), backward)


def custom(value, parents, backward_fn) -> Tensor:
    """Escape hatch for fused primitives with a hand-written adjoint."""
    return Tensor(value, tuple(parents), backward_fn)


def grad(output: Tensor, wrt) -> list[np.ndarray]:
    """Adjoints of a scalar ``output`` with respect to each tensor in ``wrt``.

    Tensors that do not influence the output get exact zeros.
    """
    if output.value.size != 1:
        raise ValueError("grad needs a scalar output")
    order = []
    seen = set()
    stack_ = [(output, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for parent in node.parents:
            if id(parent) not in seen:
                stack_.append((parent, False))

    adjoint = {id(output): np.ones_like(output.value)}
    for node in reversed(order):
        g = adjoint.pop(id(node), None) if node.parents else adjoint.get(id(node))
        if g is None or node.backward_fn is None:
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None:
                continue
            key = id(parent)
            if key in adjoint:
                adjoint[key] = adjoint[key] + pg
            else:
                adjoint[key] = pg
    return [adjoint.get(id(t), np.zeros_like(t.value)) for t in wrt]
