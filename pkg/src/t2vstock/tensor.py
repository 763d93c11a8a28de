"""Reverse-mode automatic differentiation over float64 numpy arrays.

Each operation returns a new :class:`Tensor` holding its value and, when any
input requires a gradient, a closure that pushes the incoming adjoint back to
its inputs. :meth:`Tensor.backward` walks the recorded graph once in reverse
topological order, summing adjoints wherever a tensor fans out.
"""

from __future__ import annotations

import contextlib
import math
import threading
import warnings
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeMismatch(ValueError):
    pass


class AxisOutOfRange(ValueError):
    pass


class NotScalar(ValueError):
    pass


class DisconnectedParameterWarning(UserWarning):
    pass


_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording on the current thread."""
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    # sum away leading dims numpy prepended, then dims that were size 1
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_elementwise(a: tuple, b: tuple) -> None:
    if a == b:
        return
    if math.prod(a) == 1 or math.prod(b) == 1:
        return
    short, long_ = (a, b) if len(a) <= len(b) else (b, a)
    if long_[len(long_) - len(short):] == short:
        return
    raise ShapeMismatch(f"cannot broadcast shapes {a} and {b}")


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    # basic properties

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    # graph plumbing

    @staticmethod
    def _make(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out.name = None
        out._parents = ()
        out._backward = None
        out.requires_grad = False
        if getattr(_state, "enabled", True) and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def _accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad = self.grad + g

    def backward(self, params: Iterable[Tensor] | None = None) -> None:
        """Populate ``.grad`` on every tensor that feeds this scalar.

        When ``params`` is given, any of them not reached by the graph gets a
        zero gradient and a :class:`DisconnectedParameterWarning`.
        """
        if self.data.size != 1:
            raise NotScalar(f"backward needs a scalar, got shape {self.shape}")
        order = _topological(self)
        for node in order:
            if node is not self:
                node.grad = None
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        if params is not None:
            reached = {id(n) for n in order}
            for p in params:
                if id(p) not in reached:
                    warnings.warn(
                        f"parameter {p.name or p!r} does not influence the loss",
                        DisconnectedParameterWarning,
                        stacklevel=2,
                    )
                    p.grad = np.zeros_like(p.data)
                elif p.grad is None:
                    p.grad = np.zeros_like(p.data)

    # operator sugar

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in reversed(node._parents):
            if id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise(a.shape, b.shape)

    def backward(g):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(_unbroadcast(g, b.shape))

    return Tensor._make(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise(a.shape, b.shape)

    def backward(g):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(_unbroadcast(-g, b.shape))

    return Tensor._make(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise(a.shape, b.shape)

    def backward(g):
        a._accumulate(_unbroadcast(g * b.data, a.shape))
        b._accumulate(_unbroadcast(g * a.data, b.shape))

    return Tensor._make(a.data * b.data, (a, b), backward)


def sin(x: Tensor) -> Tensor:
    def backward(g):
        x._accumulate(g * np.cos(x.data))

    return Tensor._make(np.sin(x.data), (x,), backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def backward(g):
        x._accumulate(g * mask)

    return Tensor._make(np.where(mask, x.data, 0.0), (x,), backward)


def square(x: Tensor) -> Tensor:
    def backward(g):
        x._accumulate(2.0 * x.data * g)

    return Tensor._make(x.data * x.data, (x,), backward)


def absolute(x: Tensor) -> Tensor:
    def backward(g):
        x._accumulate(g * np.sign(x.data))

    return Tensor._make(np.abs(x.data), (x,), backward)


# linear algebra and shape

def matmul(a, b) -> Tensor:
    """Batched matrix product; leading dims broadcast as in numpy."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeMismatch(f"matmul needs rank >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"inner dimensions differ: {a.shape} @ {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise ShapeMismatch(str(exc)) from None

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape))

    return Tensor._make(out, (a, b), backward)


def reshape(x: Tensor, shape: tuple) -> Tensor:
    def backward(g):
        x._accumulate(g.reshape(x.shape))

    return Tensor._make(x.data.reshape(shape), (x,), backward)


def transpose(x: Tensor, axes: tuple) -> Tensor:
    def backward(g):
        x._accumulate(np.transpose(g, np.argsort(axes)))

    return Tensor._make(np.transpose(x.data, axes), (x,), backward)


def swap_last(x: Tensor) -> Tensor:
    axes = tuple(range(x.ndim - 2)) + (x.ndim - 1, x.ndim - 2)
    return transpose(x, axes)


def broadcast_to(x: Tensor, shape: tuple) -> Tensor:
    try:
        out = np.broadcast_to(x.data, shape).copy()
    except ValueError as exc:
        raise ShapeMismatch(str(exc)) from None

    def backward(g):
        x._accumulate(_unbroadcast(g, x.shape))

    return Tensor._make(out, (x,), backward)


def concat_lastdim(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[:-1] != b.shape[:-1]:
        raise ShapeMismatch(f"leading dims differ: {a.shape} vs {b.shape}")
    split = a.shape[-1]

    def backward(g):
        a._accumulate(g[..., :split])
        b._accumulate(g[..., split:])

    return Tensor._make(np.concatenate([a.data, b.data], axis=-1), (a, b), backward)


# reductions

def _norm_axis(x: Tensor, axis: int) -> int:
    if not -x.ndim <= axis < x.ndim:
        raise AxisOutOfRange(f"axis {axis} out of range for shape {x.shape}")
    return axis % x.ndim


def sum(x: Tensor, axis: int | None = None) -> Tensor:  # noqa: A001
    if axis is None:
        def backward(g):
            x._accumulate(np.broadcast_to(g, x.shape))

        return Tensor._make(np.asarray(x.data.sum()), (x,), backward)
    axis = _norm_axis(x, axis)

    def backward(g):
        x._accumulate(np.broadcast_to(np.expand_dims(g, axis), x.shape))

    return Tensor._make(x.data.sum(axis=axis), (x,), backward)


def mean(x: Tensor, axis: int | None = None) -> Tensor:
    if axis is None:
        n = x.size

        def backward(g):
            x._accumulate(np.broadcast_to(g / n, x.shape))

        return Tensor._make(np.asarray(x.data.sum() / n), (x,), backward)
    axis = _norm_axis(x, axis)
    n = x.shape[axis]

    def backward(g):
        x._accumulate(np.broadcast_to(np.expand_dims(g, axis) / n, x.shape))

    return Tensor._make(x.data.sum(axis=axis) / n, (x,), backward)


# normalizers

def softmax_lastdim(x: Tensor) -> Tensor:
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        x._accumulate(y * (g - (g * y).sum(axis=-1, keepdims=True)))

    return Tensor._make(y, (x,), backward)


def layer_norm_lastdim(x: Tensor, gain: Tensor, bias: Tensor, epsilon: float = 1e-5) -> Tensor:
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeMismatch(f"gain/bias must have shape ({d},), got {gain.shape}, {bias.shape}")
    mu = x.data.sum(axis=-1, keepdims=True) / d
    centered = x.data - mu
    var = (centered * centered).sum(axis=-1, keepdims=True) / d
    rstd = 1.0 / np.sqrt(var + epsilon)
    xhat = centered * rstd
    out = xhat * gain.data + bias.data

    def backward(g):
        if x.requires_grad:
            gx = g * gain.data
            x._accumulate(
                rstd
                * (gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
            )
        gain._accumulate(_unbroadcast(g * xhat, gain.shape))
        bias._accumulate(_unbroadcast(g, bias.shape))

    return Tensor._make(out, (x, gain, bias), backward)


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity when not training or when rate is 0."""
    if not training or rate == 0.0:
        return x
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)

    def backward(g):
        x._accumulate(g * mask)

    return Tensor._make(x.data * mask, (x,), backward)


def finite_difference_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-5,
) -> float:
    """Largest per-coordinate discrepancy between analytic and central-difference gradients.

    ``f`` rebuilds the scalar from the current values in ``params``; each
    coordinate is perturbed in place and restored. The discrepancy is
    ``|analytic - numeric| / max(1, |analytic|)``.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    params = list(params)
    for p in params:
        p.grad = None
    f().backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    worst = 0.0
    with no_grad():
        for p, grad in zip(params, analytic):
            flat = p.data.reshape(-1)
            gflat = grad.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = f().item()
                flat[i] = orig - h
                down = f().item()
                flat[i] = orig
                numeric = (up - down) / (2.0 * h)
                err = abs(gflat[i] - numeric) / max(1.0, abs(gflat[i]))
                worst = max(worst, err)
    return worst
