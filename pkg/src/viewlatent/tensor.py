"""Dense float32 tensors with reverse-mode automatic differentiation.

The engine is deliberately small: just the operations the surrogate
networks need, each with a hand-written backward rule. Arrays are
row-major ``float32`` numpy buffers; gradients are allocated lazily on
first accumulation. Graph construction can be suppressed with
:class:`no_grad` so that pure inference never retains activations.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "no_grad",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "absolute",
    "relu",
    "tanh",
    "reduce_sum",
    "reduce_mean",
    "reshape",
    "transpose",
    "linear",
    "sn_sigma",
]

_grad_enabled = True


class no_grad:
    """Context manager disabling graph construction (inference mode)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """A dense float32 array plus an optional gradient buffer.

    Operation results remember their parents and a backward closure;
    calling :meth:`backward` on a scalar result runs reverse-mode
    accumulation over the recorded graph.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float32)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g.astype(np.float32, copy=False)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Reverse-mode sweep seeded with ones over this tensor."""
        order = _toposort(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward()
                # Free the closure (and the activations it captured) as
                # soon as the node has been processed.
                node._backward = None
                node._parents = ()

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _toposort(root: Tensor) -> list:
    order: list = []
    seen: set = set()
    stack = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float32))


def _attach(out: Tensor, parents: tuple, backward) -> Tensor:
    """Record graph edges on ``out`` when grad mode and any parent needs it."""
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data + b.data)

    def _bw():
        g = out.grad
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.shape))

    return _attach(out, (a, b), _bw)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data - b.data)

    def _bw():
        g = out.grad
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(-g, b.shape))

    return _attach(out, (a, b), _bw)


def neg(a) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(-a.data)

    def _bw():
        if a.requires_grad:
            a.accumulate_grad(-out.grad)

    return _attach(out, (a,), _bw)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data * b.data)

    def _bw():
        g = out.grad
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.data, b.shape))

    return _attach(out, (a, b), _bw)


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data / b.data)

    def _bw():
        g = out.grad
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _attach(out, (a, b), _bw)


def absolute(a) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(np.abs(a.data))

    def _bw():
        if a.requires_grad:
            a.accumulate_grad(out.grad * np.sign(a.data))

    return _attach(out, (a,), _bw)


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

def relu(a) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(np.maximum(a.data, 0.0))

    def _bw():
        if a.requires_grad:
            a.accumulate_grad(out.grad * (a.data > 0.0))

    return _attach(out, (a,), _bw)


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    y = np.tanh(a.data)
    out = Tensor(y)

    def _bw():
        if a.requires_grad:
            a.accumulate_grad(out.grad * (1.0 - y * y))

    return _attach(out, (a,), _bw)


# ---------------------------------------------------------------------------
# reductions and shape ops
# ---------------------------------------------------------------------------

def reduce_sum(a) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(a.data.sum(dtype=np.float32))

    def _bw():
        if a.requires_grad:
            a.accumulate_grad(np.broadcast_to(out.grad, a.shape))

    return _attach(out, (a,), _bw)


def reduce_mean(a) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(a.data.mean(dtype=np.float32))
    n = a.size

    def _bw():
        if a.requires_grad:
            a.accumulate_grad(np.broadcast_to(out.grad / n, a.shape))

    return _attach(out, (a,), _bw)


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(a.data.reshape(shape))

    def _bw():
        if a.requires_grad:
            a.accumulate_grad(out.grad.reshape(a.shape))

    return _attach(out, (a,), _bw)


def transpose(a, axes) -> Tensor:
    a = _as_tensor(a)
    axes = tuple(axes)
    out = Tensor(a.data.transpose(axes))
    inv = tuple(np.argsort(axes))

    def _bw():
        if a.requires_grad:
            a.accumulate_grad(out.grad.transpose(inv))

    return _attach(out, (a,), _bw)


# ---------------------------------------------------------------------------
# dense layers
# ---------------------------------------------------------------------------

def linear(x, weight, bias) -> Tensor:
    """Affine map ``weight @ x + bias``.

    ``x`` may be a vector ``(in,)`` or a batch ``(n, in)``; ``weight`` is
    ``(out, in)`` and ``bias`` ``(out,)``.
    """
    x, weight, bias = _as_tensor(x), _as_tensor(weight), _as_tensor(bias)
    if weight.ndim != 2 or bias.ndim != 1 or weight.shape[0] != bias.shape[0]:
        raise ValueError(
            f"linear: bad parameter shapes weight={weight.shape} bias={bias.shape}"
        )
    if x.ndim == 1:
        if x.shape[0] != weight.shape[1]:
            raise ValueError(
                f"linear: input size {x.shape[0]} != weight fan-in {weight.shape[1]}"
            )
        out = Tensor(weight.data @ x.data + bias.data)

        def _bw():
            g = out.grad
            if weight.requires_grad:
                weight.accumulate_grad(np.outer(g, x.data))
            if bias.requires_grad:
                bias.accumulate_grad(g)
            if x.requires_grad:
                x.accumulate_grad(weight.data.T @ g)

        return _attach(out, (x, weight, bias), _bw)

    if x.ndim == 2:
        if x.shape[1] != weight.shape[1]:
            raise ValueError(
                f"linear: input size {x.shape[1]} != weight fan-in {weight.shape[1]}"
            )
        out = Tensor(x.data @ weight.data.T + bias.data)

        def _bw():
            g = out.grad
            if weight.requires_grad:
                weight.accumulate_grad(g.T @ x.data)
            if bias.requires_grad:
                bias.accumulate_grad(g.sum(axis=0))
            if x.requires_grad:
                x.accumulate_grad(g @ weight.data)

        return _attach(out, (x, weight, bias), _bw)

    raise ValueError(f"linear: rank-{x.ndim} input not supported")


def sn_sigma(weight, u: np.ndarray, v: np.ndarray) -> Tensor:
    """Largest-singular-value estimate ``u.T @ W2d @ v`` as a graph node.

    ``u`` and ``v`` are treated as constants; the gradient with respect
    to the weight is the rank-one outer product ``u v^T``.
    """
    weight = _as_tensor(weight)
    w2 = weight.data.reshape(u.shape[0], -1)
    if v.shape[0] != w2.shape[1]:
        raise ValueError(f"sn_sigma: v has size {v.shape[0]}, expected {w2.shape[1]}")
    out = Tensor(np.float32(u @ (w2 @ v)))

    def _bw():
        if weight.requires_grad:
            weight.accumulate_grad((out.grad * np.outer(u, v)).reshape(weight.shape))

    return _attach(out, (weight,), _bw)
