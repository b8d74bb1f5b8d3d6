"""Reverse-mode automatic differentiation over float64 numpy arrays.

Graphs are recorded define-by-run. Every primitive returns a new
:class:`Tensor` holding references to its parents and a closure that maps the
output gradient to parent gradients. :meth:`Tensor.backward` walks the graph
once in reverse topological order and then releases it; a second call on the
same graph is rejected.
"""

from __future__ import annotations

import contextlib
import functools
from typing import Callable, Iterable, Sequence

import numpy as np

_grad_enabled = True


class ShapeError(ValueError):
    """Raised when operand shapes do not conform for a primitive."""


class GraphReleasedError(RuntimeError):
    """Raised when backward is called on a graph that was already consumed."""


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward", "_released")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.op = op
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self._released = False

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.item())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    # -- operators --------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    @property
    def T(self):
        return transpose(self)

    # -- backward ---------------------------------------------------------
    def backward(self) -> None:
        """Populate ``.grad`` of every ``requires_grad`` leaf reachable from this scalar."""
        if self.data.size != 1:
            raise ShapeError(f"backward: loss must be a scalar, got shape {self.shape}")
        if self._released:
            raise GraphReleasedError("backward: graph already consumed; rebuild the loss first")
        order = _topological_order(self)
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
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
        for node in order:
            if node._backward is not None:
                node._parents = ()
                node._backward = None
                node._released = True


def _topological_order(root: Tensor) -> list[Tensor]:
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
        for parent in node._parents:
            if id(parent) not in seen and parent.requires_grad:
                stack.append((parent, False))
    return order


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _result(data: np.ndarray, parents: Sequence[Tensor], backward: Callable, op: str) -> Tensor:
    out = Tensor(data, op=op)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not broadcast") from None

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(data, (a, b), backward, "add")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} do not broadcast") from None

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _result(data, (a, b), backward, "mul")


def matmul(a, b) -> Tensor:
    """Matrix product of 2-D operands, or batched over a shared leading axis."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2] or a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not conform")
    data = a.data @ b.data

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2) if a.requires_grad else None
        gb = np.swapaxes(a.data, -1, -2) @ g if b.requires_grad else None
        return ga, gb

    return _result(data, (a, b), backward, "matmul")


def affine(x, weight, bias) -> Tensor:
    """``x @ weight + bias`` for x of shape [n, d_in]."""
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0] or bias.shape != (weight.shape[1],):
        raise ShapeError(f"affine: shapes {x.shape}, {weight.shape} and {bias.shape} do not conform")
    data = x.data @ weight.data + bias.data

    def backward(g):
        gx = g @ weight.data.T if x.requires_grad else None
        gw = x.data.T @ g if weight.requires_grad else None
        gb = g.sum(axis=0) if bias.requires_grad else None
        return gx, gw, gb

    return _result(data, (x, weight, bias), backward, "affine")


def concat(tensors: Iterable, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = ", ".join(str(t.shape) for t in tensors)
        raise ShapeError(f"concat: shapes {shapes} do not conform along axis {axis}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result(data, tensors, backward, "concat")


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return _result(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _result(y, (x,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return _result(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


def lstm_cell(gates, c_prev) -> Tensor:
    """One LSTM step from pre-activation ``gates`` [.., 4h] (order i, f, o, g) and cell state [.., h].

    Returns ``[h_new | c_new]`` of shape [.., 2h]; fusing the step keeps the
    recorded graph short for sequential encoders.
    """
    gates, c_prev = as_tensor(gates), as_tensor(c_prev)
    hidden = c_prev.shape[-1]
    if gates.shape[-1] != 4 * hidden or gates.shape[:-1] != c_prev.shape[:-1]:
        raise ShapeError(f"lstm_cell: gates {gates.shape} do not match cell state {c_prev.shape}")
    sig = 0.5 * (1.0 + np.tanh(0.5 * gates.data[..., :3 * hidden]))
    i, f, o = sig[..., :hidden], sig[..., hidden:2 * hidden], sig[..., 2 * hidden:]
    g = np.tanh(gates.data[..., 3 * hidden:])
    c = f * c_prev.data + i * g
    tc = np.tanh(c)
    h = o * tc

    def backward(grad):
        gh, gc = grad[..., :hidden], grad[..., hidden:]
        gc = gc + gh * o * (1.0 - tc * tc)
        dgates = np.concatenate([gc * g * i * (1.0 - i), gc * c_prev.data * f * (1.0 - f),
                                 gh * tc * o * (1.0 - o), gc * i * (1.0 - g * g)], axis=-1)
        return dgates, gc * f

    return _result(np.concatenate([h, c], axis=-1), (gates, c_prev), backward, "lstm_cell")


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    z = np.exp(x.data - x.data.max(axis=axis, keepdims=True))
    y = z / z.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _result(y, (x,), backward, "softmax")


def logsumexp(x, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Log-sum-exp over ``axis``, restricted to entries where ``mask`` is true.

    A slice with no selected entries evaluates to ``-inf`` and receives no gradient.
    """
    x = as_tensor(x)
    if mask is None:
        xm = x.data
    else:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        xm = np.where(mask, x.data, -np.inf)
    m = xm.max(axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        e = np.exp(xm - m)
        s = e.sum(axis=axis, keepdims=True)
        out = np.log(s) + m
    weights = np.divide(e, s, out=np.zeros_like(e), where=s > 0)
    out = np.squeeze(out, axis=axis)

    def backward(g):
        return (np.expand_dims(g, axis) * weights,)

    return _result(out, (x,), backward, "logsumexp")


def tsum(x, axis=None) -> Tensor:
    x = as_tensor(x)
    data = x.data.sum(axis=axis)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return _result(data, (x,), backward, "sum")


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    try:
        data = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {x.shape} to {tuple(shape)}") from None
    return _result(data, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x, axes: Sequence[int] | None = None) -> Tensor:
    x = as_tensor(x)
    if axes is None:
        axes = tuple(range(x.ndim - 2)) + (x.ndim - 1, x.ndim - 2)
    inverse = np.argsort(axes)
    return _result(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),), "transpose")


def _basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis for i in items)


def getitem(x, index) -> Tensor:
    x = as_tensor(x)
    data = x.data[index]
    basic = _basic_index(index)

    def backward(g):
        out = np.zeros_like(x.data)
        if basic:
            out[index] += g
        else:
            np.add.at(out, index, g)
        return (out,)

    return _result(data, (x,), backward, "getitem")


def embedding(table, ids) -> Tensor:
    """Row lookup ``table[ids]``."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise ShapeError(f"embedding: table must be 2-D, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(f"embedding: ids out of range for table {table.shape}")

    def backward(g):
        out = np.zeros_like(table.data)
        np.add.at(out, ids, g)
        return (out,)

    return _result(table.data[ids], (table,), backward, "embedding")


def dropout(x, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity unless ``training`` and ``p > 0``."""
    x = as_tensor(x)
    if not training or p <= 0.0:
        return x
    if rng is None:
        raise ValueError("dropout: training mode needs a random generator")
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return mul(x, keep)


def conv1d_maxpool(x, weight, bias, lengths) -> Tensor:
    """Valid 1-D convolution followed by max-pooling over valid positions.

    x: [T, L, C] (already padded), weight: [K, C, F], bias: [F], lengths: [T]
    number of valid output positions per row (clipped to ``L - K + 1``).
    Returns [T, F].
    """
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if x.ndim != 3 or weight.ndim != 3 or x.shape[2] != weight.shape[1] or bias.shape != (weight.shape[2],):
        raise ShapeError(f"conv1d_maxpool: shapes {x.shape}, {weight.shape} and {bias.shape} do not conform")
    T, L, C = x.shape
    K, _, F = weight.shape
    P = L - K + 1
    if P < 1:
        raise ShapeError(f"conv1d_maxpool: input length {L} shorter than window {K}")
    cols = np.lib.stride_tricks.sliding_window_view(x.data, K, axis=1)  # [T, P, C, K]
    cols = np.ascontiguousarray(np.swapaxes(cols, 2, 3)).reshape(T, P, K * C)
    wmat = weight.data.reshape(K * C, F)
    conv = cols @ wmat + bias.data
    lengths = np.clip(np.asarray(lengths, dtype=np.int64), 1, P)
    valid = np.arange(P)[None, :] < lengths[:, None]
    masked = np.where(valid[:, :, None], conv, -np.inf)
    arg = masked.argmax(axis=1)  # [T, F]
    out = np.take_along_axis(conv, arg[:, None, :], axis=1)[:, 0, :]

    def backward(g):
        dconv = np.zeros_like(conv)
        np.put_along_axis(dconv, arg[:, None, :], g[:, None, :], axis=1)
        gw = np.einsum("tpi,tpf->if", cols, dconv).reshape(K, C, F) if weight.requires_grad else None
        gb = dconv.sum(axis=(0, 1)) if bias.requires_grad else None
        gx = None
        if x.requires_grad:
            dcols = (dconv @ wmat.T).reshape(T, P, K, C)
            gx = np.zeros_like(x.data)
            for k in range(K):
                gx[:, k:k + P, :] += dcols[:, :, k, :]
        return gx, gw, gb

    return _result(out, (x, weight, bias), backward, "conv1d_maxpool")


@functools.lru_cache(maxsize=256)
def _rope_tables(positions: tuple, dim: int, base: float) -> tuple[np.ndarray, np.ndarray]:
    angles = rope_angles(positions, dim, base)
    return np.cos(angles), np.sin(angles)


def rope_angles(positions, dim: int, base: float = 10000.0) -> np.ndarray:
    """Rotation angles [len(positions), dim // 2] with frequencies ``base ** (-2k / dim)``."""
    if dim % 2:
        raise ShapeError(f"rope: feature size must be even, got {dim}")
    theta = base ** (-2.0 * np.arange(dim // 2) / dim)
    return np.asarray(positions, dtype=np.float64)[:, None] * theta[None, :]


def rope(x, positions, base: float = 10000.0) -> Tensor:
    """Rotate consecutive feature pairs of each row by ``position * theta_k``.

    x has shape [..., n, d]; ``positions`` has length n.
    """
    x = as_tensor(x)
    d = x.shape[-1]
    cos, sin = _rope_tables(tuple(float(p) for p in positions), d, float(base))
    if cos.shape[0] != x.shape[-2]:
        raise ShapeError(f"rope: {cos.shape[0]} positions for input of shape {x.shape}")
    xe, xo = x.data[..., 0::2], x.data[..., 1::2]
    out = np.empty_like(x.data)
    out[..., 0::2] = xe * cos - xo * sin
    out[..., 1::2] = xe * sin + xo * cos

    def backward(g):
        ge, go = g[..., 0::2], g[..., 1::2]
        gx = np.empty_like(g)
        gx[..., 0::2] = ge * cos + go * sin
        gx[..., 1::2] = go * cos - ge * sin
        return (gx,)

    return _result(out, (x,), backward, "rope")


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape if shape is not None else (fan_in, fan_out))


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, op="param")
