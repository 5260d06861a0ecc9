"""Minimal tape-free reverse-mode autodiff over numpy arrays.

Every vector-Jacobian product is itself written with Tensor operations, so
``grad(..., create_graph=True)`` yields differentiable gradients. The gradient
penalty needs exactly that: the critic's input gradient is differentiated
again with respect to the critic parameters.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np

_RECORDING = True


@contextlib.contextmanager
def no_grad():
    global _RECORDING
    prev, _RECORDING = _RECORDING, False
    try:
        yield
    finally:
        _RECORDING = prev


@contextlib.contextmanager
def enable_grad():
    global _RECORDING
    prev, _RECORDING = _RECORDING, True
    try:
        yield
    finally:
        _RECORDING = prev


class Tensor:
    __slots__ = ("data", "parents", "vjp", "requires_grad")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=float)
        self.parents: tuple[Tensor, ...] = ()
        self.vjp: Callable | None = None
        self.requires_grad = requires_grad

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __float__(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # arithmetic -----------------------------------------------------------
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

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(as_tensor(other), self)

    def __pow__(self, p: float):
        return power(self, p)

    def __getitem__(self, index):
        return getitem(self, index)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else np.prod([self.shape[a] for a in np.atleast_1d(axis)])
        return tsum(self, axis, keepdims) * (1.0 / n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return reshape(self, shape)

    def tanh(self):
        return tanh(self)

    def sqrt(self):
        return sqrt(self)

    def abs(self):
        return tabs(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents: Sequence[Tensor], vjp: Callable) -> Tensor:
    out = Tensor(data)
    if _RECORDING and any(p.requires_grad for p in parents):
        out.parents = tuple(parents)
        out.vjp = vjp
        out.requires_grad = True
    return out


def sum_to(g: Tensor, shape: tuple[int, ...]) -> Tensor:
    """Reduce a broadcast gradient back to ``shape``."""
    if g.shape == tuple(shape):
        return g
    lead = g.ndim - len(shape)
    axes = tuple(range(lead)) + tuple(i + lead for i, s in enumerate(shape) if s == 1 and g.shape[i + lead] != 1)
    out = tsum(g, axes, keepdims=True)
    return reshape(out, tuple(shape))


# primitive ops ------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data + b.data, (a, b), lambda g: (sum_to(g, a.shape), sum_to(g, b.shape)))


def neg(a: Tensor) -> Tensor:
    return _node(-a.data, (a,), lambda g: (neg(g),))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data * b.data, (a, b), lambda g: (sum_to(g * b, a.shape), sum_to(g * a, b.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def vjp(g):
        ga = g / b
        return sum_to(ga, a.shape), sum_to(neg(ga * a / b), b.shape)

    return _node(a.data / b.data, (a, b), vjp)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data @ b.data, (a, b), lambda g: (g @ transpose(b), transpose(a) @ g))


def transpose(a: Tensor) -> Tensor:
    return _node(a.data.T, (a,), lambda g: (transpose(g),))


def tanh(a: Tensor) -> Tensor:
    out = _node(np.tanh(a.data), (a,), lambda g: (g * (1.0 - out * out),))
    return out


def exp(a: Tensor) -> Tensor:
    out = _node(np.exp(a.data), (a,), lambda g: (g * out,))
    return out


def log(a: Tensor) -> Tensor:
    return _node(np.log(a.data), (a,), lambda g: (g / a,))


def sqrt(a: Tensor) -> Tensor:
    out = _node(np.sqrt(a.data), (a,), lambda g: (g / (2.0 * out),))
    return out


def power(a: Tensor, p: float) -> Tensor:
    if p == 2:
        return a * a
    return _node(a.data**p, (a,), lambda g: (g * (p * power(a, p - 1)),))


def tabs(a: Tensor) -> Tensor:
    sign = Tensor(np.sign(a.data))
    return _node(np.abs(a.data), (a,), lambda g: (g * sign,))


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)
    shape = a.shape

    def vjp(g):
        if axis is not None and not keepdims:
            axes = tuple(ax % len(shape) for ax in np.atleast_1d(axis))
            kept = tuple(1 if i in axes else s for i, s in enumerate(shape))
            g = reshape(g, kept)
        elif axis is None and not keepdims:
            g = reshape(g, (1,) * len(shape))
        return (broadcast_to(g, shape),)

    return _node(data, (a,), vjp)


def broadcast_to(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    return _node(np.broadcast_to(a.data, shape).copy(), (a,), lambda g: (sum_to(g, a.shape),))


def reshape(a: Tensor, shape) -> Tensor:
    return _node(a.data.reshape(shape), (a,), lambda g: (reshape(g, a.shape),))


def getitem(a: Tensor, index) -> Tensor:
    return _node(a.data[index], (a,), lambda g: (scatter(g, index, a.shape),))


def scatter(g: Tensor, index, shape) -> Tensor:
    """Zeros of ``shape`` with ``g`` added at ``index`` (adjoint of getitem)."""
    data = np.zeros(shape)
    parts = index if isinstance(index, tuple) else (index,)
    if all(isinstance(i, (slice, int)) for i in parts):
        data[index] = g.data
    else:
        np.add.at(data, index, g.data)
    return _node(data, (g,), lambda gg: (getitem(gg, index),))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    ax = axis % data.ndim
    bounds = np.cumsum([0] + [t.shape[ax] for t in tensors])

    def vjp(g):
        out = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            idx = [slice(None)] * data.ndim
            idx[ax] = slice(int(lo), int(hi))
            out.append(getitem(g, tuple(idx)))
        return tuple(out)

    return _node(data, tensors, vjp)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shift = Tensor(a.data.max(axis=axis, keepdims=True))
    z = a - shift
    return z - log(exp(z).sum(axis=axis, keepdims=True))


# differentiation -----------------------------------------------------------

def _toposort(root: Tensor) -> list[Tensor]:
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
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def grad(output: Tensor, inputs: Sequence[Tensor], grad_output=None, create_graph: bool = False) -> list[Tensor]:
    """Gradients of ``output`` with respect to ``inputs``.

    Inputs the output does not depend on get zero gradients. With
    ``create_graph`` the returned tensors stay differentiable.
    """
    seed = Tensor(np.ones(output.shape) if grad_output is None else grad_output)
    grads: dict[int, Tensor] = {id(output): seed}
    ctx = contextlib.nullcontext() if create_graph else no_grad()
    with ctx:
        if output.requires_grad:
            for node in reversed(_toposort(output)):
                g = grads.get(id(node))
                if g is None or node.vjp is None:
                    continue
                for parent, pg in zip(node.parents, node.vjp(g)):
                    if pg is None or not parent.requires_grad:
                        continue
                    key = id(parent)
                    grads[key] = grads[key] + pg if key in grads else pg
    return [grads.get(id(x), Tensor(np.zeros(x.shape))) for x in inputs]
