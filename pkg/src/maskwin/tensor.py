"""Minimal dense tensors with tape-based reverse-mode differentiation.

Values are float64 numpy arrays. Every differentiable operation whose inputs
require gradients is recorded on the active :class:`Tape`; :func:`backward`
replays that tape in reverse.  There is no broadcasting: binary elementwise
operations demand equal shapes.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "Tensor", "Tape", "Parameter", "ShapeError",
    "tensor", "add", "sub", "mul", "scale", "add_scalar", "total", "mean",
    "matmul", "add_bias", "conv1d", "relu", "masked_mean", "log_softmax",
    "nll_loss", "detach", "reshape", "slice_last", "custom_op", "backward",
    "sgd_step", "no_grad",
]


class ShapeError(ValueError):
    pass


class Tensor:
    """Dense float64 array that may take part in reverse-mode differentiation."""

    __slots__ = ("data", "requires_grad", "grad", "node", "_tape")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.node: Optional[int] = None
        self._tape: Optional[Tape] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"expected a scalar tensor, got shape {list(self.shape)}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={list(self.shape)}{flag})"


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


# ---------------------------------------------------------------------------
# tape


@dataclass
class _Op:
    name: str
    inputs: tuple
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tape:
    """Ordered record of differentiable operations.

    Use as a context manager to scope recording to one training step; the
    module keeps a default tape for ad-hoc use.
    """

    def __init__(self):
        self.ops: list[_Op] = []

    def __len__(self):
        return len(self.ops)

    def record(self, op: _Op) -> int:
        self.ops.append(op)
        return len(self.ops) - 1

    def __enter__(self):
        _STACK.append(self)
        return self

    def __exit__(self, *exc):
        _STACK.pop()
        return False


_STACK: list[Tape] = [Tape()]
_RECORDING = [True]


def active_tape() -> Tape:
    return _STACK[-1]


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording; results never require gradients."""
    _RECORDING.append(False)
    try:
        yield
    finally:
        _RECORDING.pop()


def custom_op(name: str, out_data: np.ndarray, inputs: Sequence[Tensor],
              grad_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]) -> Tensor:
    """Wrap ``out_data`` as the result of an operation on ``inputs``.

    ``grad_fn`` maps the output gradient to one gradient (or None) per input.
    Nothing is recorded when no input requires a gradient.
    """
    needs = _RECORDING[-1] and any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.data = np.asarray(out_data, dtype=np.float64)
    out.grad = None
    out.requires_grad = needs
    out.node = None
    out._tape = None
    if needs:
        tape = active_tape()
        out.node = tape.record(_Op(name, tuple(inputs), out, grad_fn))
        out._tape = tape
    return out


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf.

    Gradients add onto whatever is already stored; call ``zero_grad`` (or
    :func:`sgd_step`, which zeroes) between steps.
    """
    if loss.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {list(loss.shape)}")
    if not loss.requires_grad:
        return
    if loss.node is None:
        _accumulate_leaf(loss, np.ones_like(loss.data))
        return
    tape = loss._tape
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for idx in range(loss.node, -1, -1):
        op = tape.ops[idx]
        g_out = grads.pop(id(op.output), None)
        if g_out is None:
            continue
        for inp, g in zip(op.inputs, op.backward(g_out)):
            if g is None or not inp.requires_grad:
                continue
            if inp.node is None or inp._tape is not tape:
                _accumulate_leaf(inp, g)
            else:
                key = id(inp)
                grads[key] = grads[key] + g if key in grads else g


def _accumulate_leaf(t: Tensor, g: np.ndarray) -> None:
    g = np.asarray(g, dtype=np.float64).reshape(t.shape)
    t.grad = g.copy() if t.grad is None else t.grad + g


def detach(x: Tensor) -> Tensor:
    """Value-equal copy that is cut from the tape."""
    return Tensor(x.data.copy())


# ---------------------------------------------------------------------------
# elementwise


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {list(a.shape)} vs {list(b.shape)}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return custom_op("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return custom_op("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return custom_op("mul", ad * bd, (a, b), lambda g: (g * bd, g * ad))


def scale(x: Tensor, c: float) -> Tensor:
    return custom_op("scale", x.data * c, (x,), lambda g: (g * c,))


def add_scalar(x: Tensor, c: float) -> Tensor:
    return custom_op("add_scalar", x.data + c, (x,), lambda g: (g,))


def relu(x: Tensor) -> Tensor:
    pos = x.data > 0
    # np.maximum keeps NaN visible to the divergence guard
    return custom_op("relu", np.maximum(x.data, 0.0), (x,), lambda g: (g * pos,))


def total(x: Tensor) -> Tensor:
    shape = x.shape
    return custom_op("sum", np.sum(x.data), (x,), lambda g: (np.full(shape, float(g)),))


def mean(x: Tensor) -> Tensor:
    shape, n = x.shape, x.size
    return custom_op("mean", np.mean(x.data), (x,), lambda g: (np.full(shape, float(g) / n),))


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return custom_op("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def slice_last(x: Tensor, start: int, stop: int) -> Tensor:
    """``x[..., start:stop]``; the backward pass zero-pads."""
    shape = x.shape

    def grad_fn(g):
        full = np.zeros(shape)
        full[..., start:stop] = g
        return (full,)

    return custom_op("slice", x.data[..., start:stop], (x,), grad_fn)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {list(a.shape)} by {list(b.shape)}")
    ad, bd = a.data, b.data
    return custom_op("matmul", ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Add a length-P row vector to every row of a [B x P] matrix."""
    if x.data.ndim != 2 or b.shape != (x.shape[1],):
        raise ShapeError(f"add_bias: {list(x.shape)} and {list(b.shape)}")
    return custom_op("add_bias", x.data + b.data, (x, b), lambda g: (g, g.sum(axis=0)))


def conv1d(x: Tensor, w: Tensor, stride: int = 1) -> Tensor:
    """Valid cross-correlation of [C_in x L] (or [B x C_in x L]) with [C_out x C_in x k]."""
    if stride < 1:
        raise ValueError(f"conv1d: stride must be >= 1, got {stride}")
    batched = x.data.ndim == 3
    xd = x.data if batched else x.data[None]
    wd = w.data
    if xd.ndim != 3 or wd.ndim != 3 or xd.shape[1] != wd.shape[1]:
        raise ShapeError(f"conv1d: input {list(x.shape)} incompatible with weight {list(w.shape)}")
    B, C, L = xd.shape
    O, _, k = wd.shape
    if L < k:
        raise ShapeError(f"conv1d: input length {L} shorter than kernel {k}")
    L_out = (L - k) // stride + 1
    cols = sliding_window_view(xd, k, axis=-1)[:, :, ::stride, :]  # B,C,L_out,k
    cols2 = np.ascontiguousarray(cols.transpose(0, 2, 1, 3)).reshape(B * L_out, C * k)
    w2 = wd.reshape(O, C * k)
    out = (cols2 @ w2.T).reshape(B, L_out, O).transpose(0, 2, 1)

    def grad_fn(g):
        g = g if batched else g[None]
        g2 = g.transpose(0, 2, 1).reshape(B * L_out, O)
        gw = (g2.T @ cols2).reshape(O, C, k) if w.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = (g2 @ w2).reshape(B, L_out, C, k)
            gx = np.zeros((B, C, L))
            span = stride * (L_out - 1) + 1
            for j in range(k):
                gx[:, :, j:j + span:stride] += gcols[:, :, :, j].transpose(0, 2, 1)
            gx = gx if batched else gx[0]
        return gx, gw

    return custom_op("conv1d", out if batched else out[0], (x, w), grad_fn)


def masked_mean(x: Tensor, valid) -> Tensor:
    """Mean over the last axis restricted to columns where ``valid`` is true."""
    valid = np.asarray(valid, dtype=bool)
    if valid.shape != (x.shape[-1],):
        raise ShapeError(f"masked_mean: mask of length {valid.shape} for input {list(x.shape)}")
    count = int(valid.sum())
    if count == 0:
        raise ValueError("masked_mean: empty valid region")
    shape = x.shape
    out = x.data[..., valid].sum(axis=-1) / count

    def grad_fn(g):
        full = np.zeros(shape)
        full[..., valid] = (g / count)[..., None]
        return (full,)

    return custom_op("masked_mean", out, (x,), grad_fn)


def log_softmax(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ShapeError(f"log_softmax expects [B x K], got {list(x.shape)}")
    z = x.data - x.data.max(axis=1, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    p = np.exp(out)
    return custom_op("log_softmax", out, (x,),
                     lambda g: (g - p * g.sum(axis=1, keepdims=True),))


def nll_loss(logp: Tensor, labels) -> Tensor:
    labels = np.asarray(labels, dtype=np.int64)
    B, K = logp.shape
    if labels.shape != (B,):
        raise ShapeError(f"nll_loss: {B} rows but {labels.shape} labels")
    if labels.size and (labels.min() < 0 or labels.max() >= K):
        raise ValueError(f"nll_loss: labels must lie in [0, {K})")
    rows = np.arange(B)
    out = -logp.data[rows, labels].mean()

    def grad_fn(g):
        full = np.zeros((B, K))
        full[rows, labels] = -float(g) / B
        return (full,)

    return custom_op("nll_loss", out, (logp,), grad_fn)


# ---------------------------------------------------------------------------
# parameters and optimisation


@dataclass
class Parameter:
    name: str
    tensor: Tensor
    bounds: Optional[tuple] = None
    velocity: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.tensor.requires_grad = True
        self.clamp()

    @property
    def value(self) -> np.ndarray:
        return self.tensor.data

    def clamp(self) -> None:
        if self.bounds is not None:
            lo, hi = self.bounds
            np.clip(self.tensor.data, lo, hi, out=self.tensor.data)


def sgd_step(params: Sequence[Parameter], lr: float, momentum: float = 0.0) -> None:
    """``v <- momentum*v + grad; p <- p - lr*v``, then clamp and zero gradients."""
    for p in params:
        t = p.tensor
        g = t.grad if t.grad is not None else np.zeros_like(t.data)
        p.velocity = g.copy() if p.velocity is None else momentum * p.velocity + g
        t.data -= lr * p.velocity
        p.clamp()
        t.grad = None
