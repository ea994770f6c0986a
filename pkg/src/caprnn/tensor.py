"""Minimal reverse-mode automatic differentiation over numpy arrays.

Every value flowing through the models is a :class:`Tensor`: a dense
n-dimensional float array plus the bookkeeping needed to accumulate exact
gradients on the backward pass.  Only the handful of operations the two
caption architectures need are implemented.  The backward sweep visits nodes
in reverse topological order of construction, so gradient accumulation is
bitwise deterministic for a fixed graph.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError

DTYPES = {32: np.float32, 64: np.float64}


def dtype_for(precision: int):
    if precision not in DTYPES:
        raise ValueError(f"precision must be 32 or 64, got {precision!r}")
    return DTYPES[precision]


class Tensor:
    """A float array with an optional backward rule.

    ``param`` points back at the owning :class:`~caprnn.nn.Parameter` for
    leaf tensors created from trainable parameters; the backward sweep
    flushes gradients there.
    """

    __slots__ = ("data", "grad", "param", "_parents", "_backward")

    def __init__(self, data, parents=(), backward=None):
        self.data = data
        self.grad = None
        self.param = None
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"

    def backward(self):
        """Backpropagate from this scalar, flushing grads into parameters."""
        if self.data.size != 1:
            raise DimensionError(f"backward() needs a scalar, got shape {self.data.shape}")
        order = _topo_order(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        for node in order:
            if node.param is not None and node.grad is not None:
                node.param.grad += node.grad


def _topo_order(root: Tensor) -> list[Tensor]:
    order = []
    seen = set()
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
        # push parents in reverse so they are visited in construction order
        for parent in reversed(node._parents):
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad += g


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to `shape`, undoing numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def constant(data, precision: int = 64) -> Tensor:
    """Wrap plain data as a leaf tensor with no gradient path."""
    return Tensor(np.asarray(data, dtype=dtype_for(precision)))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape[-1] != b.data.shape[0]:
        raise DimensionError(
            f"matmul inner extents differ: {a.data.shape} vs {b.data.shape}"
        )
    out = Tensor(a.data @ b.data, parents=(a, b))

    def backward(g):
        _accum(a, g @ b.data.T)
        _accum(b, _tensordot_left(a.data, g))

    out._backward = backward
    return out


def _tensordot_left(a_data: np.ndarray, g: np.ndarray) -> np.ndarray:
    # grad wrt b of a @ b, supporting a with leading batch axes
    if a_data.ndim == 1:
        return np.outer(a_data, g)
    flat_a = a_data.reshape(-1, a_data.shape[-1])
    flat_g = g.reshape(-1, g.shape[-1])
    return flat_a.T @ flat_g


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data, parents=(a, b))

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    out._backward = backward
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data * b.data, parents=(a, b))

    def backward(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    out._backward = backward
    return out


def sigmoid(x: Tensor) -> Tensor:
    # 0.5*(1+tanh(x/2)) is the logistic function, stable for large |x|
    val = 0.5 * (np.tanh(0.5 * x.data) + 1.0)
    out = Tensor(val, parents=(x,))

    def backward(g):
        _accum(x, g * val * (1.0 - val))

    out._backward = backward
    return out


def tanh(x: Tensor) -> Tensor:
    val = np.tanh(x.data)
    out = Tensor(val, parents=(x,))

    def backward(g):
        _accum(x, g * (1.0 - val * val))

    out._backward = backward
    return out


def concat(parts: list[Tensor], axis: int = -1) -> Tensor:
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis), parents=tuple(parts))
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        g = np.moveaxis(g, axis, -1)
        for part, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            _accum(part, np.moveaxis(g[..., lo:hi], -1, axis))

    out._backward = backward
    return out


def take_rows(table: Tensor, indices: np.ndarray) -> Tensor:
    """Row gather (embedding lookup); backward scatters into touched rows only."""
    idx = np.asarray(indices, dtype=np.int64)
    out = Tensor(table.data[idx], parents=(table,))

    def backward(g):
        # scatter in place; a fresh (vocab, width) temporary per step is wasteful
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        np.add.at(table.grad, idx, g)

    out._backward = backward
    return out


def total(x: Tensor) -> Tensor:
    """Sum of all elements, as a scalar tensor."""
    out = Tensor(np.asarray(x.data.sum(), dtype=x.data.dtype), parents=(x,))

    def backward(g):
        _accum(x, np.broadcast_to(g, x.data.shape))

    out._backward = backward
    return out


def xent_sum(logits: Tensor, targets: np.ndarray, mask: np.ndarray | None = None) -> Tensor:
    """Summed cross-entropy of rows of `logits` against integer `targets`.

    Uses the log-sum-exp formulation for numerical stability.  `mask`, when
    given, zeroes the contribution (and gradient) of padded rows.
    """
    t = np.asarray(targets, dtype=np.int64)
    z = logits.data
    m = z.max(axis=-1, keepdims=True)
    shifted = z - m
    lse = np.log(np.exp(shifted).sum(axis=-1)) + m[..., 0]
    rows = np.arange(t.shape[0])
    per_row = lse - z[rows, t]
    if mask is not None:
        per_row = per_row * mask
    out = Tensor(np.asarray(per_row.sum(), dtype=z.dtype), parents=(logits,))

    def backward(g):
        soft = np.exp(shifted - (lse - m[..., 0])[..., None])
        soft[rows, t] -= 1.0
        if mask is not None:
            soft *= mask[:, None]
        _accum(logits, g * soft)

    out._backward = backward
    return out
