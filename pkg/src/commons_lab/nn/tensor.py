"""Reverse-mode automatic differentiation over numpy arrays.

Every op returns a new :class:`Tensor` whose ``data`` is a fresh array
(nothing shares memory with its inputs except ``reshape`` views, which are
never written to). The graph is recorded through parent links; ``backward``
walks it once in reverse topological order.
"""

from __future__ import annotations

import contextlib
import threading

import numpy as np

from commons_lab.errors import UsageError

_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_state, "grad", True)


@contextlib.contextmanager
def no_grad():
    prev = _grad_enabled()
    _state.grad = False
    try:
        yield
    finally:
        _state.grad = prev


class FrozenConstants:
    """Record/replay the values of stop-gradient and sampling nodes.

    Inside ``record()`` every stop_gradient output and every categorical sample
    is remembered in call order; inside ``replay()`` the same calls return the
    remembered values. Finite-difference checks use this so that perturbed
    forward passes treat those nodes as the constants backward assumes.
    """

    def __init__(self):
        self.values: list = []
        self.mode: str | None = None
        self._cursor = 0

    @contextlib.contextmanager
    def record(self):
        self.values, self.mode = [], "record"
        prev = getattr(_state, "frozen", None)
        _state.frozen = self
        try:
            yield self
        finally:
            _state.frozen, self.mode = prev, None

    @contextlib.contextmanager
    def replay(self):
        self.mode, self._cursor = "replay", 0
        prev = getattr(_state, "frozen", None)
        _state.frozen = self
        try:
            yield self
        finally:
            _state.frozen, self.mode = prev, None

    def through(self, value: np.ndarray) -> np.ndarray:
        if self.mode == "record":
            self.values.append(value.copy())
            return value
        out = self.values[self._cursor]
        self._cursor += 1
        return out.copy()


def frozen_through(value: np.ndarray) -> np.ndarray:
    frozen = getattr(_state, "frozen", None)
    return value if frozen is None else frozen.through(value)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "parents", "backward_fn", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self.parents: tuple = ()
        self.backward_fn = None
        self.name = name

    # -- basics --------------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    # -- operator sugar ------------------------------------------------
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

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _make(data: np.ndarray, parents: tuple, backward_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    if _grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = parents
        out.backward_fn = backward_fn
    else:
        out.requires_grad = False
        out.parents = ()
        out.backward_fn = None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    ndiff = grad.ndim - len(shape)
    if ndiff > 0:
        grad = grad.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -- elementwise ------------------------------------------------------
def add(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    if not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    out = a.data + b.data

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(out, (a, b), bw)


def sub(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    if not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    out = a.data - b.data

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(out, (a, b), bw)


def mul(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    if not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    out = a.data * b.data

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(out, (a, b), bw)


def div(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    if not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    out = a.data / b.data

    def bw(g):
        return (_unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make(out, (a, b), bw)


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _make(out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    return _make(np.log(x.data), (x,), lambda g: (g / x.data,))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return _make(out, (x,), lambda g: (g * (1.0 - out * out),))


def sigmoid(x: Tensor) -> Tensor:
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _make(out, (x,), lambda g: (g * out * (1.0 - out),))


def elu(x: Tensor) -> Tensor:
    neg = np.expm1(np.minimum(x.data, 0))
    out = np.maximum(x.data, 0)
    out += neg
    # derivative is 1 for x > 0 and exp(x) = neg + 1 otherwise; neg is 0 for x > 0
    return _make(out, (x,), lambda g: (g * (neg + 1.0),))


def square(x: Tensor) -> Tensor:
    return _make(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,))


def minimum(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    take_a = a.data <= b.data
    out = np.where(take_a, a.data, b.data)

    def bw(g):
        return (_unbroadcast(np.where(take_a, g, 0.0).astype(g.dtype), a.shape),
                _unbroadcast(np.where(take_a, 0.0, g).astype(g.dtype), b.shape))

    return _make(out, (a, b), bw)


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp; gradient is zero where the clamp is active."""
    out = np.clip(x.data, lo, hi)
    inside = (x.data >= lo) & (x.data <= hi)
    return _make(out, (x,), lambda g: (np.where(inside, g, 0.0).astype(g.dtype),))


def stop_gradient(x: Tensor) -> Tensor:
    """Same value, treated as a constant by backward."""
    return Tensor(frozen_through(np.array(x.data, copy=True)))


# -- reductions and shape ops ------------------------------------------
def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = np.sum(x.data, axis=axis, keepdims=keepdims)
    out = np.asarray(out, dtype=x.dtype)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(out, (x,), bw)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return tsum(x, axis, keepdims) * (1.0 / float(n))


def reshape(x: Tensor, shape) -> Tensor:
    out = x.data.reshape(shape)
    return _make(out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor) -> Tensor:
    return _make(x.data.T, (x,), lambda g: (g.T,))


def getitem(x: Tensor, idx) -> Tensor:
    out = np.array(x.data[idx])

    basic = all(isinstance(i, (int, slice, type(None), type(Ellipsis)))
                for i in (idx if isinstance(idx, tuple) else (idx,)))

    def bw(g):
        full = np.zeros_like(x.data)
        if basic:
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        return (full,)

    return _make(out, (x,), bw)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, sizes, axis=axis))

    return _make(out, tuple(tensors), bw)


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in tensors], axis=axis)

    def bw(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _make(out, tuple(tensors), bw)


def take_along_last(x: Tensor, index: np.ndarray) -> Tensor:
    """``x[..., index]`` per row: picks one entry of the last axis."""
    idx = np.asarray(index)[..., None]
    out = np.take_along_axis(x.data, idx, axis=-1)[..., 0]

    def bw(g):
        full = np.zeros_like(x.data)
        np.put_along_axis(full, idx, g[..., None], axis=-1)
        return (full,)

    return _make(out, (x,), bw)


# -- linear algebra ----------------------------------------------------
def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[-1] != b.shape[0] or b.ndim != 2:
        raise UsageError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def bw(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = None
        if b.requires_grad:
            gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return (ga, gb)

    return _make(out, (a, b), bw)


# -- softmax family ----------------------------------------------------
def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)

    def bw(g):
        return (g - soft * g.sum(axis=axis, keepdims=True),)

    return _make(out, (x,), bw)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (x,), bw)


# -- backward ----------------------------------------------------------
def topological_order(root: Tensor) -> list:
    """Nodes reachable from ``root`` that need gradients, parents first."""
    order, seen = [], set()
    stack_ = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack_.append((p, False))
    return order


def backward(loss: Tensor, record: list | None = None) -> list:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every leaf reached.

    ``record`` may be a precomputed :func:`topological_order`; the order used
    is returned so callers can inspect it.
    """
    if loss.data.size != 1:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return []
    order = record if record is not None else topological_order(loss)
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.backward_fn is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if not parent.requires_grad or pg is None:
                continue
            pg = np.asarray(pg, dtype=parent.dtype)
            prev = grads.get(id(parent))
            grads[id(parent)] = pg if prev is None else prev + pg
    return order
