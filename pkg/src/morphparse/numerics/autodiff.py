"""Tape-based reverse-mode automatic differentiation over numpy arrays.

Every differentiable op creates an output :class:`Tensor` and, when recording
is enabled and some input requires a gradient, appends it to the global tape.
Because nodes are appended in creation order, the tape is already a
topological order; :func:`backward` walks it in reverse.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterator, Sequence

import numpy as np

_DEFAULT_DTYPE = np.dtype(np.float64)


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype}")
    _DEFAULT_DTYPE = dtype


def get_default_dtype() -> np.dtype:
    return _DEFAULT_DTYPE


@contextmanager
def default_dtype(dtype) -> Iterator[None]:
    prev = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(prev)


class Tape:
    def __init__(self) -> None:
        self.nodes: list[Tensor] = []
        self.enabled = True

    def reset(self) -> None:
        for node in self.nodes:
            node._release()
        self.nodes.clear()


_TAPE = Tape()


def get_tape() -> Tape:
    return _TAPE


def reset_tape() -> None:
    _TAPE.reset()


@contextmanager
def no_grad() -> Iterator[None]:
    prev = _TAPE.enabled
    _TAPE.enabled = False
    try:
        yield
    finally:
        _TAPE.enabled = prev


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible."""


def _as_array(data, dtype=None) -> np.ndarray:
    arr = np.asarray(data)
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    if arr.dtype.kind != "f":
        arr = arr.astype(_DEFAULT_DTYPE)
    return arr


class Tensor:
    """Dense array node. ``grad`` is filled in by :func:`backward`."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents", "_owned")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = _as_array(data, dtype)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._backward: Callable[[np.ndarray], None] | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._owned = False

    # --- bookkeeping -----------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def _release(self) -> None:
        self._backward = None
        self._parents = ()
        self.grad = None

    def _accum(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g
            self._owned = False
        else:
            self.grad = self.grad + g
            self._owned = True

    def _accum_at(self, index, g: np.ndarray, unique: bool) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
            self._owned = True
        elif not self._owned:
            self.grad = self.grad.copy()
            self._owned = True
        if unique:
            self.grad[index] += g
        else:
            np.add.at(self.grad, index, g)

    # --- operator sugar --------------------------------------------------
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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None):
        return tsum(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


class Parameter(Tensor):
    """A named leaf tensor whose gradient is always materialised."""

    __slots__ = ("name",)

    def __init__(self, name: str, value, dtype=None):
        super().__init__(value, requires_grad=True, dtype=dtype)
        self.name = name
        self.grad = np.zeros_like(self.data)
        self._owned = True

    @property
    def value(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)
        self._owned = True

    def _release(self) -> None:  # parameters are never on the tape
        pass

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _const(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype))


def _make(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    rg = _TAPE.enabled and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=rg)
    if rg:
        out._parents = tuple(parents)
        out._backward = backward
        _TAPE.nodes.append(out)
    return out


def backward(loss: Tensor, grad: np.ndarray | None = None) -> None:
    """Propagate gradients from ``loss`` into every recorded ancestor.

    Clears the tape afterwards; leaf tensors keep their accumulated grads.
    """
    if not loss.requires_grad:
        raise RuntimeError("loss does not depend on any tensor requiring grad")
    if grad is None:
        if loss.data.size != 1:
            raise RuntimeError("grad must be given for non-scalar outputs")
        grad = np.ones_like(loss.data)
    loss.grad = np.asarray(grad, dtype=loss.dtype)
    nodes = _TAPE.nodes
    for node in reversed(nodes):
        if node.grad is not None and node._backward is not None:
            node._backward(node.grad)
    _TAPE.reset()


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# --- elementwise -------------------------------------------------------------

def add(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else _const(a, b)
    b = b if isinstance(b, Tensor) else _const(b, a)
    out_data = a.data + b.data

    def bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g, b.shape))

    return _make(out_data, (a, b), bw)


def sub(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else _const(a, b)
    b = b if isinstance(b, Tensor) else _const(b, a)

    def bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(-g, b.shape))

    return _make(a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else _const(a, b)
    b = b if isinstance(b, Tensor) else _const(b, a)

    def bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), bw)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _make(y, (x,), lambda g: x._accum(g * (1.0 - y * y)))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid(x.data)
    return _make(y, (x,), lambda g: x._accum(g * y * (1.0 - y)))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _make(x.data * mask, (x,), lambda g: x._accum(g * mask))


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    return _make(y, (x,), lambda g: x._accum(g * y))


def log(x: Tensor) -> Tensor:
    return _make(np.log(x.data), (x,), lambda g: x._accum(g / x.data))


# --- linear algebra ----------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs >=2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return _make(a.data @ b.data, (a, b), bw)


def affine(x: Tensor, W: Tensor, b: Tensor | None = None) -> Tensor:
    """``W x + b`` applied along the last axis of ``x``; ``W`` is (out, in)."""
    if W.ndim != 2 or x.shape[-1] != W.shape[1]:
        raise DimensionError(f"affine: input shape {x.shape} incompatible with weight shape {W.shape}")
    if b is not None and b.shape != (W.shape[0],):
        raise DimensionError(f"affine: bias shape {b.shape} incompatible with weight shape {W.shape}")
    y = x.data @ W.data.T
    if b is not None:
        y = y + b.data

    def bw(g):
        if x.requires_grad:
            x._accum(g @ W.data)
        if W.requires_grad:
            W._accum(g.reshape(-1, g.shape[-1]).T @ x.data.reshape(-1, x.shape[-1]))
        if b is not None and b.requires_grad:
            b._accum(g.reshape(-1, g.shape[-1]).sum(axis=0))

    parents = (x, W) if b is None else (x, W, b)
    return _make(y, parents, bw)


def einsum(spec: str, a: Tensor, b: Tensor) -> Tensor:
    """Two-operand einsum. Every index of an operand must appear in the other
    operand or in the output, and no index may repeat within one operand."""
    ins, out = spec.replace(" ", "").split("->")
    sa, sb = ins.split(",")
    for s, other in ((sa, sb + out), (sb, sa + out)):
        if len(set(s)) != len(s) or any(c not in other for c in s):
            raise ValueError(f"unsupported einsum spec {spec!r}")
    y = np.einsum(spec, a.data, b.data, optimize=True)

    def bw(g):
        if a.requires_grad:
            a._accum(np.einsum(f"{out},{sb}->{sa}", g, b.data, optimize=True))
        if b.requires_grad:
            b._accum(np.einsum(f"{out},{sa}->{sb}", g, a.data, optimize=True))

    return _make(y, (a, b), bw)


# --- shape ops ---------------------------------------------------------------

def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return _make(x.data.reshape(shape), (x,), lambda g: x._accum(g.reshape(old)))


def transpose(x: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)
    return _make(np.transpose(x.data, axes), (x,), lambda g: x._accum(np.transpose(g, inv)))


def _is_basic(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis for i in items)


def getitem(x: Tensor, index) -> Tensor:
    basic = _is_basic(index)
    out = x.data[index]
    if basic:
        out = out.copy()
    return _make(out, (x,), lambda g: x._accum_at(index, g, unique=basic))


def take_rows(table: Tensor, ids) -> Tensor:
    """Embedding lookup: ``table[ids]`` with duplicate-safe backward."""
    ids = np.asarray(ids, dtype=np.int64)
    return _make(table.data[ids], (table,), lambda g: table._accum_at(ids, g, unique=False))


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    xs = list(xs)
    if not xs:
        raise ValueError("concat of empty sequence")
    ax = axis % xs[0].ndim
    data = np.concatenate([t.data for t in xs], axis=ax)
    bounds = np.cumsum([0] + [t.shape[ax] for t in xs])

    def bw(g):
        for t, lo, hi in zip(xs, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[ax] = slice(lo, hi)
                t._accum(g[tuple(sl)])

    return _make(data, xs, bw)


def stack(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    xs = list(xs)
    data = np.stack([t.data for t in xs], axis=axis)

    def bw(g):
        for k, t in enumerate(xs):
            if t.requires_grad:
                t._accum(np.take(g, k, axis=axis))

    return _make(data, xs, bw)


def unstack(x: Tensor, axis: int = 0) -> list[Tensor]:
    """Split along ``axis`` into views; backward writes each slice in place."""
    ax = axis % x.ndim
    pieces = []
    for k in range(x.shape[ax]):
        index = (slice(None),) * ax + (k,)
        pieces.append(_make(x.data[index], (x,), lambda g, index=index: x._accum_at(index, g, unique=True)))
    return pieces


def reverse_padded(x: Tensor, lengths) -> Tensor:
    """Reverse each column of a time-major (T, B, ...) tensor within its length.

    Padding positions stay where they are; the permutation is an involution,
    so the backward pass applies the same gather.
    """
    T, B = x.shape[0], x.shape[1]
    lengths = np.asarray(lengths)
    t = np.arange(T)[:, None]
    src = np.where(t < lengths[None, :], lengths[None, :] - 1 - t, t)
    cols = np.broadcast_to(np.arange(B)[None, :], (T, B))
    return _make(x.data[src, cols], (x,), lambda g: x._accum(g[src, cols]))


# --- reductions --------------------------------------------------------------

def tsum(x: Tensor, axis=None) -> Tensor:
    shape = x.shape

    def bw(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        x._accum(np.broadcast_to(g, shape))

    return _make(np.asarray(x.data.sum(axis=axis)), (x,), bw)


def mean(x: Tensor, axis=None) -> Tensor:
    n = x.data.size if axis is None else x.shape[axis]
    return mul(tsum(x, axis), 1.0 / n)


def tmax(x: Tensor, axis: int) -> Tensor:
    """Max along ``axis``; the gradient goes to the first maximising entry."""
    idx = np.argmax(x.data, axis=axis)
    out = np.take_along_axis(x.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis)

    def bw(g):
        full = np.zeros_like(x.data)
        np.put_along_axis(full, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
        x._accum(full)

    return _make(out, (x,), bw)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    y = z - lse

    def bw(g):
        x._accum(g - np.exp(y) * g.sum(axis=axis, keepdims=True))

    return _make(y, (x,), bw)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = np.exp(x.data - x.data.max(axis=axis, keepdims=True))
    y = z / z.sum(axis=axis, keepdims=True)

    def bw(g):
        x._accum(y * (g - (g * y).sum(axis=axis, keepdims=True)))

    return _make(y, (x,), bw)


def softmax_cross_entropy(logits: Tensor, gold: int) -> Tensor:
    """``-log softmax(logits)[gold]`` for a 1-d logit vector."""
    if logits.ndim != 1:
        raise DimensionError(f"expected a 1-d logit vector, got shape {logits.shape}")
    n = logits.shape[0]
    if not 0 <= gold < n:
        raise IndexError(f"gold index {gold} out of range for {n} logits")
    return mul(getitem(log_softmax(logits), gold), -1.0)


# --- fused recurrent cell ----------------------------------------------------

def lstm_cell(pre: Tensor, c_prev: Tensor) -> Tensor:
    """Fused LSTM nonlinearity.

    ``pre`` holds gate pre-activations ordered (input, forget, output,
    candidate), shape (..., 4H). Returns ``[h; c]`` with shape (..., 2H).
    """
    H = c_prev.shape[-1]
    if pre.shape[-1] != 4 * H:
        raise DimensionError(f"lstm_cell: pre-activation shape {pre.shape} vs cell shape {c_prev.shape}")
    p = pre.data
    i = _sigmoid(p[..., :H])
    f = _sigmoid(p[..., H : 2 * H])
    o = _sigmoid(p[..., 2 * H : 3 * H])
    u = np.tanh(p[..., 3 * H :])
    c = f * c_prev.data + i * u
    tc = np.tanh(c)
    h = o * tc

    def bw(g):
        gh = g[..., :H]
        dc = g[..., H:] + gh * o * (1.0 - tc * tc)
        if pre.requires_grad:
            pre._accum(
                np.concatenate(
                    [
                        dc * u * i * (1.0 - i),
                        dc * c_prev.data * f * (1.0 - f),
                        gh * tc * o * (1.0 - o),
                        dc * i * (1.0 - u * u),
                    ],
                    axis=-1,
                )
            )
        if c_prev.requires_grad:
            c_prev._accum(dc * f)

    return _make(np.concatenate([h, c], axis=-1), (pre, c_prev), bw)


# --- convolution helper ------------------------------------------------------

def unfold(x: Tensor, width: int) -> Tensor:
    """Sliding windows over axis 1 of (N, L, D): returns (N, L-width+1, width*D)."""
    N, L, D = x.shape
    if L < width:
        raise DimensionError(f"unfold: sequence length {L} shorter than window {width}")
    W = L - width + 1
    out = np.concatenate([x.data[:, k : k + W, :] for k in range(width)], axis=-1)

    def bw(g):
        full = np.zeros_like(x.data)
        for k in range(width):
            full[:, k : k + W, :] += g[..., k * D : (k + 1) * D]
        x._accum(full)

    return _make(out, (x,), bw)


# --- stochastic --------------------------------------------------------------

def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout; identity when not training or ``rate == 0``."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an explicit rng")
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return _make(x.data * keep, (x,), lambda g: x._accum(g * keep))
