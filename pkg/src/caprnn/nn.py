"""Differentiable building blocks: dense and embedding layers, an LSTM cell,
softmax cross-entropy, Xavier initialization, Adam, and a finite-difference
gradient checker.

All operations accept either :class:`Parameter` objects or already-wrapped
:class:`~caprnn.tensor.Tensor` leaves, build onto the autodiff graph, and
validate that their outputs are finite.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import tensor as T
from .errors import DimensionError, NumericError, UsageError, VocabularyError


class Parameter:
    """A named trainable array with gradient and Adam moment slots."""

    def __init__(self, name: str, value: np.ndarray):
        value = np.asarray(value)
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)
        self.m = np.zeros_like(value)
        self.v = np.zeros_like(value)

    @property
    def shape(self):
        return self.value.shape

    def as_tensor(self) -> T.Tensor:
        leaf = T.Tensor(self.value)
        leaf.param = self
        return leaf

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


def _leaf(p) -> T.Tensor:
    return p.as_tensor() if isinstance(p, Parameter) else p


def _require_finite(arr: np.ndarray, op: str) -> None:
    if not np.isfinite(arr).all():
        raise NumericError(f"{op} produced non-finite values")


@dataclass
class LstmState:
    """Hidden and cell state; both always have the same extent."""

    hidden: T.Tensor
    cell: T.Tensor


def zero_state(state_size: int, precision: int = 32, batch: int | None = None) -> LstmState:
    shape = (state_size,) if batch is None else (batch, state_size)
    dt = T.dtype_for(precision)
    return LstmState(T.Tensor(np.zeros(shape, dt)), T.Tensor(np.zeros(shape, dt)))


@dataclass
class LstmCellParams:
    """The eight weight matrices and four bias vectors of the LSTM cell.

    ``w_x*`` have extent (input size, state size), ``w_s*`` (state size,
    state size), biases (state size,).  Fields may hold Parameters or
    pre-wrapped leaf tensors.
    """

    w_xi: object
    w_si: object
    w_xf: object
    w_sf: object
    w_xo: object
    w_so: object
    w_xc: object
    w_sc: object
    b_i: object
    b_f: object
    b_o: object
    b_c: object

    def parameters(self) -> list[Parameter]:
        return [getattr(self, f.name) for f in fields(self)]

    def wired(self) -> "LstmCellParams":
        """One leaf tensor per parameter, for reuse across timesteps."""
        return LstmCellParams(*[_leaf(p) for p in self.parameters()])


def init_lstm(prefix: str, input_size: int, state_size: int, seeds: list[int],
              precision: int = 32) -> LstmCellParams:
    """Xavier-initialized gate weights, zero biases."""
    dt = T.dtype_for(precision)
    names = ["i", "f", "o", "c"]
    params = {}
    for k, gate in enumerate(names):
        params[f"w_x{gate}"] = Parameter(
            f"{prefix}.w_x{gate}", xavier_init((input_size, state_size), seeds[2 * k], precision))
        params[f"w_s{gate}"] = Parameter(
            f"{prefix}.w_s{gate}", xavier_init((state_size, state_size), seeds[2 * k + 1], precision))
        params[f"b_{gate}"] = Parameter(f"{prefix}.b_{gate}", np.zeros(state_size, dt))
    return LstmCellParams(
        params["w_xi"], params["w_si"], params["w_xf"], params["w_sf"],
        params["w_xo"], params["w_so"], params["w_xc"], params["w_sc"],
        params["b_i"], params["b_f"], params["b_o"], params["b_c"])


def dense_forward(x: T.Tensor, weights, bias) -> T.Tensor:
    """Fully connected layer with bias: x @ W + b."""
    w, b = _leaf(weights), _leaf(bias)
    if x.data.shape[-1] != w.data.shape[0]:
        raise DimensionError(
            f"dense input shape {x.data.shape} incompatible with weights shape {w.data.shape}")
    out = T.add(T.matmul(x, w), b)
    _require_finite(out.data, "dense_forward")
    return out


def embedding_lookup(indices, table) -> T.Tensor:
    """Gather rows of the embedding table; backward scatters into touched rows."""
    tab = _leaf(table)
    idx = np.asarray(indices, dtype=np.int64)
    vocab = tab.data.shape[0]
    if idx.size:
        bad = (idx < 0) | (idx >= vocab)
        if bad.any():
            raise VocabularyError(int(idx[bad].flat[0]), vocab)
    return T.take_rows(tab, idx)


def lstm_step(x: T.Tensor, prev: LstmState, params: LstmCellParams) -> LstmState:
    """One LSTM step.

    Gates use the logistic function, the candidate uses tanh:

        i = sig(x W_xi + s W_si + b_i)
        f = sig(x W_xf + s W_sf + b_f)
        o = sig(x W_xo + s W_so + b_o)
        g = tanh(x W_xc + s W_sc + b_c)
        c = f * c_prev + i * g
        s = o * tanh(c)
    """
    p = params.wired() if isinstance(params.w_xi, Parameter) else params
    if x.data.shape[-1] != p.w_xi.data.shape[0]:
        raise DimensionError(
            f"lstm input shape {x.data.shape} incompatible with w_xi shape {p.w_xi.data.shape}")
    if prev.hidden.data.shape != prev.cell.data.shape:
        raise DimensionError(
            f"hidden shape {prev.hidden.data.shape} differs from cell shape {prev.cell.data.shape}")

    def gate(wx, ws, b, fn):
        return fn(T.add(T.add(T.matmul(x, wx), T.matmul(prev.hidden, ws)), b))

    i = gate(p.w_xi, p.w_si, p.b_i, T.sigmoid)
    f = gate(p.w_xf, p.w_sf, p.b_f, T.sigmoid)
    o = gate(p.w_xo, p.w_so, p.b_o, T.sigmoid)
    g = gate(p.w_xc, p.w_sc, p.b_c, T.tanh)
    c = T.add(T.mul(f, prev.cell), T.mul(i, g))
    s = T.mul(o, T.tanh(c))
    _require_finite(c.data, "lstm_step")
    return LstmState(hidden=s, cell=c)


def softmax_xent(logits: T.Tensor, target: int) -> T.Tensor:
    """-log softmax(logits)[target], computed via log-sum-exp; scalar tensor."""
    vocab = logits.data.shape[-1]
    if not 0 <= target < vocab:
        raise VocabularyError(target, vocab)
    if logits.data.ndim != 1:
        raise DimensionError(f"softmax_xent expects 1-D logits, got shape {logits.data.shape}")
    row = T.Tensor(logits.data[None, :], parents=(logits,))
    row._backward = lambda g: T._accum(logits, g[0])
    out = T.xent_sum(row, np.array([target]))
    _require_finite(out.data, "softmax_xent")
    return out


def xavier_init(shape, seed: int, precision: int = 32) -> np.ndarray:
    """Glorot uniform samples in +-sqrt(6 / (fan_in + fan_out)); 2-D shapes only.

    Biases are not initialized here; they start at zero.
    """
    if len(shape) != 2:
        raise UsageError(f"xavier_init needs a 2-D shape, got {tuple(shape)}")
    fan_in, fan_out = shape
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    rng = np.random.default_rng(seed)
    return rng.uniform(-bound, bound, size=shape).astype(T.dtype_for(precision))


def adam_step(params, step_count: int, lr: float = 0.001, beta1: float = 0.9,
              beta2: float = 0.999, epsilon: float = 1e-8) -> None:
    """Bias-corrected Adam update applied in place; gradients cleared after."""
    if step_count < 1:
        raise UsageError(f"adam_step needs step_count >= 1, got {step_count}")
    c1 = 1.0 - beta1 ** step_count
    c2 = 1.0 - beta2 ** step_count
    for p in params:
        g = p.grad
        p.m = beta1 * p.m + (1.0 - beta1) * g
        p.v = beta2 * p.v + (1.0 - beta2) * (g * g)
        m_hat = p.m / c1
        v_hat = p.v / c2
        p.value -= (lr * m_hat / (np.sqrt(v_hat) + epsilon)).astype(p.value.dtype)
        _require_finite(p.value, "adam_step")
        p.zero_grad()


@dataclass
class GradCheckReport:
    """Max relative error of analytic vs central-difference gradients, per parameter."""

    errors: dict
    tolerance: float

    @property
    def max_error(self) -> float:
        return max(self.errors.values()) if self.errors else 0.0

    @property
    def ok(self) -> bool:
        return self.max_error < self.tolerance


def grad_check(loss_fn, params, tolerance: float = 1e-4, step: float = 1e-5) -> GradCheckReport:
    """Compare backprop gradients of a scalar-loss closure against central differences.

    Requires 64-bit parameters; the closure is re-evaluated 2N times for N
    parameter entries.
    """
    for p in params:
        if p.value.dtype != np.float64:
            raise UsageError(f"grad_check requires 64-bit parameters; {p.name} is {p.value.dtype}")
        p.zero_grad()
    loss = loss_fn()
    if not np.isfinite(loss.data).all():
        raise NumericError("grad_check closure produced a non-finite loss")
    loss.backward()
    analytic = {p.name: p.grad.copy() for p in params}

    errors = {}
    for p in params:
        flat = p.value.reshape(-1)
        numeric = np.zeros_like(flat)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            hi = float(loss_fn().data)
            flat[k] = orig - step
            lo = float(loss_fn().data)
            flat[k] = orig
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise NumericError(f"non-finite loss while perturbing {p.name}[{k}]")
            numeric[k] = (hi - lo) / (2.0 * step)
        a = analytic[p.name].reshape(-1)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-8)
        rel = np.abs(a - numeric) / denom
        errors[p.name] = float(rel.max()) if rel.size else 0.0
        p.zero_grad()
    return GradCheckReport(errors=errors, tolerance=tolerance)
