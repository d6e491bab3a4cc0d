"""Minimal reverse-mode autodiff over numpy arrays.

Covers exactly the ops the graph-network model needs: affine algebra,
ReLU, exp/log, concat, row gather, segment aggregation, a fused per-segment
log-softmax, clipping, and reductions.  Arrays keep whatever float dtype
they were created with (training runs float32; float64 is used by
finite-difference checks); reductions accumulate in float64.
"""

from __future__ import annotations

import contextlib

import numpy as np

FINITE_CHECKS = True

_grad_enabled = True


class NonFiniteError(Exception):
    """A forward op produced NaN or Inf."""


class NoGraphRecorded(Exception):
    """backward() called on a tensor with no recorded graph."""


@contextlib.contextmanager
def no_grad():
    """Disable graph recording; ops return leaf tensors."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _check(data: np.ndarray, op: str) -> np.ndarray:
    if FINITE_CHECKS and not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite values out of {op}")
    return data


class Tensor:
    __slots__ = ("data", "grad", "parents", "_backward", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward=None):
        self.data = np.asarray(data)
        self.grad = None
        if _grad_enabled:
            self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
            self.parents = tuple(p for p in parents if p.requires_grad)
            self._backward = backward if self.requires_grad else None
        else:
            self.requires_grad = False
            self.parents = ()
            self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def _accum(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(as_tensor(other), self)

    def __neg__(self):
        return neg(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def backward(loss: Tensor) -> None:
    """Reverse-mode sweep from a scalar loss into leaf .grad buffers."""
    if loss.data.size != 1:
        raise ValueError("backward() needs a scalar loss")
    if not loss.requires_grad or loss._backward is None and not loss.parents:
        raise NoGraphRecorded("loss does not depend on any tracked parameter")
    order: list[Tensor] = []
    seen = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    loss._accum(np.ones_like(loss.data))
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# Elementwise and linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    data = _check(a.data @ b.data, "matmul")

    def bwd(g):
        if a.requires_grad:
            a._accum(g @ b.data.T)
        if b.requires_grad:
            b._accum(a.data.T @ g)
    return Tensor(data, parents=(a, b), backward=bwd)


def add(a: Tensor, b) -> Tensor:
    b = as_tensor(b)
    data = a.data + b.data

    def bwd(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g, b.data.shape))
    return Tensor(data, parents=(a, b), backward=bwd)


def sub(a: Tensor, b) -> Tensor:
    b = as_tensor(b)
    data = a.data - b.data

    def bwd(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(-g, b.data.shape))
    return Tensor(data, parents=(a, b), backward=bwd)


def mul(a: Tensor, b) -> Tensor:
    b = as_tensor(b)
    data = a.data * b.data

    def bwd(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g * a.data, b.data.shape))
    return Tensor(data, parents=(a, b), backward=bwd)


def neg(a: Tensor) -> Tensor:
    def bwd(g):
        a._accum(-g)
    return Tensor(-a.data, parents=(a,), backward=bwd)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def bwd(g):
        a._accum(g * mask)
    return Tensor(a.data * mask, parents=(a,), backward=bwd)


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        data = _check(np.exp(a.data), "exp")

    def bwd(g):
        a._accum(g * data)
    return Tensor(data, parents=(a,), backward=bwd)


def log(a: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        data = _check(np.log(a.data), "log")

    def bwd(g):
        a._accum(g / a.data)
    return Tensor(data, parents=(a,), backward=bwd)


def square(a: Tensor) -> Tensor:
    def bwd(g):
        a._accum(g * 2.0 * a.data)
    return Tensor(a.data * a.data, parents=(a,), backward=bwd)


def minimum(a: Tensor, b) -> Tensor:
    b = as_tensor(b)
    take_a = a.data <= b.data

    def bwd(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g * take_a, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g * ~take_a, b.data.shape))
    return Tensor(np.minimum(a.data, b.data), parents=(a, b), backward=bwd)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    inside = (a.data >= lo) & (a.data <= hi)

    def bwd(g):
        a._accum(g * inside)
    return Tensor(np.clip(a.data, lo, hi), parents=(a,), backward=bwd)


# ---------------------------------------------------------------------------
# Shape ops


def reshape(a: Tensor, shape) -> Tensor:
    def bwd(g):
        a._accum(g.reshape(a.data.shape))
    return Tensor(a.data.reshape(shape), parents=(a,), backward=bwd)


def concat(tensors, axis: int = 1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                t._accum(np.take(g, np.arange(lo, hi), axis=axis))
    return Tensor(data, parents=tuple(tensors), backward=bwd)


def gather_rows(a: Tensor, index: np.ndarray) -> Tensor:
    index = np.asarray(index, dtype=np.int64)

    def bwd(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, index, g)
        a._accum(buf)
    return Tensor(a.data[index], parents=(a,), backward=bwd)


# ---------------------------------------------------------------------------
# Segment ops (axis 0, explicit segment count)


def segment_sum(a: Tensor, segments: np.ndarray, num_segments: int) -> Tensor:
    segments = np.asarray(segments, dtype=np.int64)
    out = np.zeros((num_segments,) + a.data.shape[1:], dtype=a.data.dtype)
    np.add.at(out, segments, a.data)

    def bwd(g):
        a._accum(g[segments])
    return Tensor(out, parents=(a,), backward=bwd)


def segment_mean(a: Tensor, segments: np.ndarray, num_segments: int) -> Tensor:
    """Per-segment mean; empty segments yield zero rows."""
    segments = np.asarray(segments, dtype=np.int64)
    counts = np.bincount(segments, minlength=num_segments).astype(a.data.dtype)
    denom = np.maximum(counts, 1.0)
    total = np.zeros((num_segments,) + a.data.shape[1:], dtype=a.data.dtype)
    np.add.at(total, segments, a.data)
    scale = denom.reshape((num_segments,) + (1,) * (a.data.ndim - 1))

    def bwd(g):
        a._accum((g / scale)[segments])
    return Tensor(total / scale, parents=(a,), backward=bwd)


def segment_log_softmax(scores: Tensor, segments: np.ndarray, num_segments: int) -> Tensor:
    """log softmax within each segment of a 1-D score vector, max-stabilized."""
    if scores.data.ndim != 1:
        raise ValueError("segment_log_softmax expects a 1-D score vector")
    segments = np.asarray(segments, dtype=np.int64)
    high = np.full(num_segments, -np.inf, dtype=scores.data.dtype)
    np.maximum.at(high, segments, scores.data)
    shifted = scores.data - high[segments]
    sums = np.zeros(num_segments, dtype=scores.data.dtype)
    np.add.at(sums, segments, np.exp(shifted))
    logp = _check(shifted - np.log(sums)[segments], "segment_log_softmax")

    def bwd(g):
        gsum = np.zeros(num_segments, dtype=g.dtype)
        np.add.at(gsum, segments, g)
        scores._accum(g - np.exp(logp) * gsum[segments])
    return Tensor(logp, parents=(scores,), backward=bwd)


# ---------------------------------------------------------------------------
# Reductions (accumulate in float64, return in operand dtype)


def tsum(a: Tensor, axis=None) -> Tensor:
    data = np.sum(a.data, axis=axis, dtype=np.float64).astype(a.data.dtype)

    def bwd(g):
        if axis is None:
            a._accum(np.broadcast_to(g, a.data.shape).copy())
        else:
            a._accum(np.broadcast_to(np.expand_dims(g, axis), a.data.shape).copy())
    return Tensor(data, parents=(a,), backward=bwd)


def tmean(a: Tensor, axis=None) -> Tensor:
    count = a.data.size if axis is None else a.data.shape[axis]
    data = (np.sum(a.data, axis=axis, dtype=np.float64) / count).astype(a.data.dtype)

    def bwd(g):
        scaled = g / count
        if axis is None:
            a._accum(np.broadcast_to(scaled, a.data.shape).copy())
        else:
            a._accum(np.broadcast_to(np.expand_dims(scaled, axis), a.data.shape).copy())
    return Tensor(data, parents=(a,), backward=bwd)
