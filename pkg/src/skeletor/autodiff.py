"""Dense float64 tensors with reverse-mode gradients.

Each op records its inputs and a backward rule on the produced Tensor; the
graph is implicit. `backward(loss)` walks it once in reverse topological
order, accumulating gradients additively into every reachable node. Ops are
deterministic: same inputs give bit-identical outputs.

Convention: ReLU uses subgradient 0 at exactly 0.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ShapeError


class Tensor:
    """Immutable-by-convention float64 array plus its gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        _parents: tuple["Tensor", ...] = (),
        _backward: Callable[[np.ndarray], None] | None = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; the named functions below do the work.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def constant(data) -> Tensor:
    return Tensor(data)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _tracked(parents: Sequence[Tensor]) -> bool:
    return any(p.requires_grad or p._parents for p in parents)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    t.grad = g if t.grad is None else t.grad + g


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = np.add(a.data, b.data)

    def back(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return Tensor(out, _parents=(a, b), _backward=back) if _tracked((a, b)) else Tensor(out)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = np.subtract(a.data, b.data)

    def back(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(-g, b.data.shape))

    return Tensor(out, _parents=(a, b), _backward=back) if _tracked((a, b)) else Tensor(out)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = np.multiply(a.data, b.data)

    def back(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return Tensor(out, _parents=(a, b), _backward=back) if _tracked((a, b)) else Tensor(out)


def scale(a, c: float) -> Tensor:
    a = _as_tensor(a)
    c = float(c)
    out = a.data * c

    def back(g):
        _accumulate(a, g * c)

    return Tensor(out, _parents=(a,), _backward=back) if _tracked((a,)) else Tensor(out)


def matmul(a, b) -> Tensor:
    """Matrix product with numpy-style broadcasting over leading axes."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2 operands, got {a.shape} @ {b.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"inner dimensions disagree: {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)

    def back(g):
        _accumulate(a, _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.data.shape))
        _accumulate(b, _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.data.shape))

    return Tensor(out, _parents=(a, b), _backward=back) if _tracked((a, b)) else Tensor(out)


def transpose_last2(a) -> Tensor:
    a = _as_tensor(a)
    if a.data.ndim < 2:
        raise ShapeError(f"transpose_last2 needs rank >= 2, got {a.shape}")
    out = np.swapaxes(a.data, -1, -2)

    def back(g):
        _accumulate(a, np.swapaxes(g, -1, -2))

    return Tensor(out, _parents=(a,), _backward=back) if _tracked((a,)) else Tensor(out)


def relu(a) -> Tensor:
    a = _as_tensor(a)
    out = np.maximum(a.data, 0.0)

    def back(g):
        _accumulate(a, g * (a.data > 0.0))

    return Tensor(out, _parents=(a,), _backward=back) if _tracked((a,)) else Tensor(out)


def softmax(a, axis: int = -1) -> Tensor:
    """Row-stochastic along `axis`, computed with max subtraction."""
    a = _as_tensor(a)
    if a.data.ndim == 0 or a.data.shape[axis] == 0:
        raise ShapeError(f"softmax needs a non-empty axis, got shape {a.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        _accumulate(a, y * (g - dot))

    return Tensor(y, _parents=(a,), _backward=back) if _tracked((a,)) else Tensor(y)


def layer_norm(x, gain, bias, eps: float = 1e-6) -> Tensor:
    """Normalize the last axis to mean 0 / variance 1, then apply gain and bias."""
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    d = x.data.shape[-1]
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise ShapeError(f"gain/bias must have shape ({d},), got {gain.shape} and {bias.shape}")
    mean = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * inv
    out = gain.data * xhat + bias.data

    def back(g):
        _accumulate(gain, _unbroadcast(g * xhat, gain.data.shape))
        _accumulate(bias, _unbroadcast(g, bias.data.shape))
        gx = g * gain.data
        term = gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).mean(axis=-1, keepdims=True)
        _accumulate(x, term * inv)

    return Tensor(out, _parents=(x, gain, bias), _backward=back) if _tracked((x, gain, bias)) else Tensor(out)


def concat_last(parts: Sequence[Tensor]) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat_last needs at least one tensor")
    out = np.concatenate([p.data for p in parts], axis=-1)
    widths = [p.data.shape[-1] for p in parts]

    def back(g):
        offset = 0
        for p, w in zip(parts, widths):
            _accumulate(p, g[..., offset : offset + w])
            offset += w

    return Tensor(out, _parents=tuple(parts), _backward=back) if _tracked(parts) else Tensor(out)


def sum_all(a) -> Tensor:
    a = _as_tensor(a)
    out = a.data.sum()

    def back(g):
        _accumulate(a, np.broadcast_to(g, a.data.shape))

    return Tensor(out, _parents=(a,), _backward=back) if _tracked((a,)) else Tensor(out)


def mean_all(a) -> Tensor:
    a = _as_tensor(a)
    return scale(sum_all(a), 1.0 / a.data.size)


def backward(loss: Tensor) -> None:
    """Fill `.grad` on every node reachable from `loss`, seeding with 1.

    Gradients add across multiple uses; nodes not reachable from the loss
    keep grad None (read as zero). Raises if the loss is not a scalar.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward expects a scalar loss, got shape {loss.shape}")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
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
            if id(p) not in seen:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def zero_grads(tensors) -> None:
    for t in tensors:
        t.grad = None
