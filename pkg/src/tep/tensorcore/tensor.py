"""Dense fp64 tensors with reverse-mode autodiff over an explicit tape.

Every forward computation in the models is expressed through the ops in
this module.  Ops record their output on the active :class:`Tape`; the
recording order is topological by construction, so the backward pass is a
single reverse sweep over ``tape.nodes``.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

ArrayLike = Union[float, int, Sequence, np.ndarray]

# Finite-output checking on every recorded op.  Cheap at desk scale and it
# turns silent overflow into a hard error.
STRICT_FINITE = True


class Tensor:
    """A dense float64 array with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "op")

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None
        self.op: Optional[str] = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad = self.grad + g

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{tag}, requires_grad={self.requires_grad})"

    # Operator sugar; the free functions below do the real work.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)


class Tape:
    """Ordered record of op outputs; inputs of a node always precede it."""

    def __init__(self):
        self.nodes: list[Tensor] = []
        self.watched: list[Tensor] = []

    def record(self, t: Tensor) -> None:
        self.nodes.append(t)

    def watch(self, t: Tensor) -> None:
        if t not in self.watched:
            self.watched.append(t)


_active_tape: Optional[Tape] = None


class tape_scope:
    """Context manager installing a tape as the active recording target."""

    def __init__(self, tape: Optional[Tape] = None):
        self.tape = tape if tape is not None else Tape()
        self._prev: Optional[Tape] = None

    def __enter__(self) -> Tape:
        global _active_tape
        self._prev = _active_tape
        _active_tape = self.tape
        return self.tape

    def __exit__(self, *exc):
        global _active_tape
        _active_tape = self._prev
        return False


def active_tape() -> Optional[Tape]:
    return _active_tape


def as_tensor(x: Union[Tensor, ArrayLike]) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `g` down to `shape` (reverses numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _make(data: np.ndarray, parents: Iterable[Tensor], backward, op: str) -> Tensor:
    parents = tuple(parents)
    needs = any(p.requires_grad or p._backward is not None for p in parents)
    out = Tensor(data)
    if STRICT_FINITE and not np.all(np.isfinite(data)):
        raise FloatingPointError(f"non-finite values produced by op {op!r}")
    tape = _active_tape
    if needs and tape is not None:
        out._parents = parents
        out._backward = backward
        out.op = op
        tape.record(out)
        for p in parents:
            if p.requires_grad and p._backward is None:
                tape.watch(p)
    return out


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def backward(g):
        a.accumulate_grad(_unbroadcast(g, a.data.shape))
        b.accumulate_grad(_unbroadcast(g, b.data.shape))

    return _make(data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data

    def backward(g):
        a.accumulate_grad(_unbroadcast(g, a.data.shape))
        b.accumulate_grad(_unbroadcast(-g, b.data.shape))

    return _make(data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def backward(g):
        a.accumulate_grad(_unbroadcast(g * b.data, a.data.shape))
        b.accumulate_grad(_unbroadcast(g * a.data, b.data.shape))

    return _make(data, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data / b.data

    def backward(g):
        a.accumulate_grad(_unbroadcast(g / b.data, a.data.shape))
        b.accumulate_grad(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _make(data, (a, b), backward, "div")


def neg(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        a.accumulate_grad(-g)

    return _make(-a.data, (a,), backward, "neg")


def powc(a, exponent: float) -> Tensor:
    """Elementwise power with a constant exponent."""
    a = as_tensor(a)
    data = a.data ** exponent

    def backward(g):
        a.accumulate_grad(g * exponent * a.data ** (exponent - 1))

    return _make(data, (a,), backward, "pow")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    data = np.sqrt(a.data)

    def backward(g):
        a.accumulate_grad(g * 0.5 / np.sqrt(a.data))

    return _make(data, (a,), backward, "sqrt")


def exp(a) -> Tensor:
    a = as_tensor(a)
    data = np.exp(a.data)

    def backward(g):
        a.accumulate_grad(g * data)

    return _make(data, (a,), backward, "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    data = np.log(a.data)

    def backward(g):
        a.accumulate_grad(g / a.data)

    return _make(data, (a,), backward, "log")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def backward(g):
        a.accumulate_grad(g * data * (1.0 - data))

    return _make(data, (a,), backward, "sigmoid")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    data = np.tanh(a.data)

    def backward(g):
        a.accumulate_grad(g * (1.0 - data * data))

    return _make(data, (a,), backward, "tanh")


def relu(a) -> Tensor:
    a = as_tensor(a)
    data = np.maximum(a.data, 0.0)

    def backward(g):
        a.accumulate_grad(g * (a.data > 0.0))

    return _make(data, (a,), backward, "relu")


# ---------------------------------------------------------------------------
# reductions and shape ops

def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        g = np.asarray(g)
        if axis is None:
            grad = np.broadcast_to(g, a.data.shape)
        else:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            if not keepdims:
                for ax in sorted(ax % a.data.ndim for ax in axes):
                    g = np.expand_dims(g, ax)
            grad = np.broadcast_to(g, a.data.shape)
        a.accumulate_grad(grad)

    return _make(data, (a,), backward, "sum")


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        n = a.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        n = int(np.prod([a.data.shape[ax] for ax in axes]))
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / n)


def tmax(a, axis: int) -> Tensor:
    """Max over one axis; ties route the gradient to the earliest index."""
    a = as_tensor(a)
    idx = np.argmax(a.data, axis=axis)  # first occurrence on ties
    data = np.take_along_axis(a.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis)

    def backward(g):
        grad = np.zeros_like(a.data)
        np.put_along_axis(grad, np.expand_dims(idx, axis), np.expand_dims(np.asarray(g), axis), axis=axis)
        a.accumulate_grad(grad)

    return _make(data, (a,), backward, "max")


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        gs = (g * data).sum(axis=axis, keepdims=True)
        a.accumulate_grad(data * (g - gs))

    return _make(data, (a,), backward, "softmax")


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)

    def backward(g):
        a.accumulate_grad(np.asarray(g).reshape(a.data.shape))

    return _make(a.data.reshape(shape), (a,), backward, "reshape")


def swapaxes(a, ax1: int, ax2: int) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        a.accumulate_grad(np.swapaxes(np.asarray(g), ax1, ax2))

    return _make(np.swapaxes(a.data, ax1, ax2), (a,), backward, "swapaxes")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        g = np.asarray(g)
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            t.accumulate_grad(g[tuple(sl)])

    return _make(data, tuple(tensors), backward, "concat")


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)
    data = a.data[idx]

    def backward(g):
        grad = np.zeros_like(a.data)
        np.add.at(grad, idx, np.asarray(g))
        a.accumulate_grad(grad)

    return _make(data, (a,), backward, "getitem")


def pad_time(a, left: int, right: int, axis: int = 1) -> Tensor:
    """Zero-pad along one axis (used for convolutions)."""
    a = as_tensor(a)
    width = [(0, 0)] * a.data.ndim
    width[axis] = (left, right)
    data = np.pad(a.data, width)

    def backward(g):
        sl = [slice(None)] * a.data.ndim
        sl[axis] = slice(left, left + a.data.shape[axis])
        a.accumulate_grad(np.asarray(g)[tuple(sl)])

    return _make(data, (a,), backward, "pad")


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = np.matmul(a.data, b.data)

    def backward(g):
        g = np.asarray(g)
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        a.accumulate_grad(_unbroadcast(ga, a.data.shape))
        b.accumulate_grad(_unbroadcast(gb, b.data.shape))

    return _make(data, (a, b), backward, "matmul")


def dropout(a, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout; identity in eval mode."""
    a = as_tensor(a)
    if not training or rate <= 0.0:
        return a
    mask = (rng.random(a.data.shape) >= rate) / (1.0 - rate)

    def backward(g):
        a.accumulate_grad(np.asarray(g) * mask)

    return _make(a.data * mask, (a,), backward, "dropout")


# ---------------------------------------------------------------------------
# backward driver

def forward_backward(tape: Tape, loss: Tensor, params: Optional[dict] = None) -> dict:
    """Run the reverse sweep from a scalar loss; return gradients per parameter.

    `params` maps parameter id -> Tensor; when omitted, every watched leaf on
    the tape with `requires_grad` is used (keyed by its name or python id).
    Parameters not connected to the loss get zero gradients.  The tape is
    left intact; accumulated `.grad` slots are cleared before the sweep.
    """
    if loss.data.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.data.shape}")
    if params is None:
        params = {}
        for t in tape.watched:
            key = t.name if t.name is not None else f"param@{id(t)}"
            params[key] = t
    for node in tape.nodes:
        node.grad = None
    for t in params.values():
        t.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        if node.grad is not None and node._backward is not None:
            node._backward(node.grad)
    out = {}
    for key, t in params.items():
        g = t.grad if t.grad is not None else np.zeros_like(t.data)
        out[key] = Tensor(g)
    return out


def uniform_fan_init(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    """Uniform fan-scaled init: +/- sqrt(6 / (fan_in + fan_out))."""
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)
