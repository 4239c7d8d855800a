"""Reverse-mode automatic differentiation over dense float64 arrays.

Deliberately small: only the primitives the models in this package need.
Arithmetic broadcasts like numpy; matrix products are 2-D only. Ragged
batches of graphs are handled by keeping all node rows concatenated and
using the segment_* ops, which avoids padding.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` back down to `shape` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A float64 array plus an optional gradient tape node."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def _accumulate(self, grad: np.ndarray) -> None:
        # constants (requires_grad False, no parents) need no gradient; skipping
        # them avoids computing mask/operand products that nobody reads.
        if not self.requires_grad:
            return
        # accumulation always rebinds (never mutates in place), so adopting the
        # incoming array on first touch is safe even when parents share it
        if self.grad is None:
            self.grad = grad
        else:
            self.grad = self.grad + grad

    def backward(self) -> None:
        """Backpropagate from a scalar tensor through the recorded tape."""
        if self.data.size != 1:
            raise ShapeError(f"backward() requires a scalar, got shape {self.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        return _add(self, _wrap(other))

    def __radd__(self, other):
        return _add(_wrap(other), self)

    def __sub__(self, other):
        return _add(self, _neg(_wrap(other)))

    def __rsub__(self, other):
        return _add(_wrap(other), _neg(self))

    def __neg__(self):
        return _neg(self)

    def __mul__(self, other):
        return _mul(self, _wrap(other))

    def __rmul__(self, other):
        return _mul(_wrap(other), self)

    def __truediv__(self, other):
        return _div(self, _wrap(other))

    def __rtruediv__(self, other):
        return _div(_wrap(other), self)

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return _reduce(self, np.sum, axis, keepdims, weight=1.0)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.data.size
        else:
            count = self.data.shape[axis]
        return _reduce(self, np.mean, axis, keepdims, weight=1.0 / count)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))

    return _make(data, (a, b), backward)


def _neg(a: Tensor) -> Tensor:
    def backward(g):
        a._accumulate(-g)

    return _make(-a.data, (a,), backward)


def _mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _make(data, (a, b), backward)


def _div(a: Tensor, b: Tensor) -> Tensor:
    data = a.data / b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _make(data, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product with gradients for both operands."""
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return _make(data, (a, b), backward)


def transpose(a: Tensor) -> Tensor:
    def backward(g):
        a._accumulate(g.T)

    return _make(a.data.T, (a,), backward)


def _reduce(a: Tensor, fn, axis, keepdims: bool, weight: float) -> Tensor:
    data = fn(a.data, axis=axis, keepdims=keepdims)

    def backward(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.data.shape) * weight)

    return _make(data, (a,), backward)


def sqrt(a: Tensor) -> Tensor:
    data = np.sqrt(a.data)

    def backward(g):
        a._accumulate(g * 0.5 / data)

    return _make(data, (a,), backward)


def leaky_relu(a: Tensor, slope: float = 0.01) -> Tensor:
    """Elementwise max(x, slope*x); subgradient at 0 takes the slope branch."""
    if not 0.0 < slope < 1.0:
        raise ValueError(f"leaky_relu slope must lie in (0, 1), got {slope}")
    factor = np.where(a.data > 0, 1.0, slope)
    data = a.data * factor

    def backward(g):
        a._accumulate(g * factor)

    return _make(data, (a,), backward)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    data = _sigmoid(a.data)

    def backward(g):
        a._accumulate(g * data * (1.0 - data))

    return _make(data, (a,), backward)


def log_sigmoid(a: Tensor) -> Tensor:
    """log(sigmoid(x)), computed as -softplus(-x) for stability."""
    x = a.data
    data = -(np.maximum(-x, 0.0) + np.log1p(np.exp(-np.abs(x))))

    def backward(g):
        a._accumulate(g * _sigmoid(-x))

    return _make(data, (a,), backward)


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    """Stack 2-D tensors vertically; gradients split back by row counts."""
    parts = list(parts)
    sizes = [p.data.shape[0] for p in parts]
    data = np.concatenate([p.data for p in parts], axis=0)

    def backward(g):
        offset = 0
        for p, n in zip(parts, sizes):
            p._accumulate(g[offset : offset + n])
            offset += n

    return _make(data, parts, backward)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    """Stack 2-D tensors horizontally; gradients split back by column counts."""
    parts = list(parts)
    widths = [p.data.shape[1] for p in parts]
    data = np.concatenate([p.data for p in parts], axis=1)

    def backward(g):
        offset = 0
        for p, w in zip(parts, widths):
            p._accumulate(g[:, offset : offset + w])
            offset += w

    return _make(data, parts, backward)


def segment_matmul(mats: Sequence, x: Tensor, sizes: Sequence[int]) -> Tensor:
    """Block-diagonal product: row segment i of the output is mats[i] @ x[segment i].

    The matrices are constants (no gradient) and may be dense arrays or
    scipy sparse matrices; used for per-graph adjacency aggregation on a
    concatenated node-feature tensor.
    """
    if sum(sizes) != x.data.shape[0]:
        raise ShapeError(f"segment sizes {list(sizes)} do not cover {x.shape}")
    out = np.empty_like(x.data)
    offset = 0
    for m, n in zip(mats, sizes):
        out[offset : offset + n] = m @ x.data[offset : offset + n]
        offset += n

    def backward(g):
        gx = np.empty_like(g)
        off = 0
        for m, n in zip(mats, sizes):
            gx[off : off + n] = m.T @ g[off : off + n]
            off += n
        x._accumulate(gx)

    return _make(out, (x,), backward)


def segment_mean(x: Tensor, sizes: Sequence[int]) -> Tensor:
    """Mean over each row segment; returns one row per segment."""
    if sum(sizes) != x.data.shape[0]:
        raise ShapeError(f"segment sizes {list(sizes)} do not cover {x.shape}")
    rows = []
    offset = 0
    for n in sizes:
        if n == 0:
            raise ShapeError("cannot pool an empty segment")
        rows.append(x.data[offset : offset + n].mean(axis=0))
        offset += n
    data = np.stack(rows, axis=0)

    def backward(g):
        gx = np.empty_like(x.data)
        off = 0
        for i, n in enumerate(sizes):
            gx[off : off + n] = g[i] / n
            off += n
        x._accumulate(gx)

    return _make(data, (x,), backward)


def batch_norm_train(
    x: Tensor, gamma: Tensor, beta: Tensor, eps: float
) -> tuple[Tensor, np.ndarray, np.ndarray]:
    """Fused per-feature batch normalization with batch statistics.

    Returns (normalized-and-affine output, batch mean, biased batch variance);
    gradients flow through the statistics. Fused because the composed-primitive
    form dominated training profiles.
    """
    n = x.data.shape[0]
    mu = x.data.mean(axis=0, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=0, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    data = gamma.data * xhat + beta.data

    def backward(g):
        if beta.requires_grad:
            beta._accumulate(g.sum(axis=0, keepdims=True))
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).sum(axis=0, keepdims=True))
        if x.requires_grad:
            dxhat = g * gamma.data
            dx = (inv / n) * (
                n * dxhat
                - dxhat.sum(axis=0, keepdims=True)
                - xhat * (dxhat * xhat).sum(axis=0, keepdims=True)
            )
            x._accumulate(dx)

    return _make(data, (x, gamma, beta), backward), mu, var


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax of a plain array (no gradient tracking)."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy between row-wise softmax(logits) and integer labels.

    Fused for stability; the backward pass is (softmax - onehot) / batch.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if logits.data.ndim != 2 or labels.shape != (logits.data.shape[0],):
        raise ShapeError(
            f"expected (n, k) logits with n labels, got {logits.shape} and {labels.shape}"
        )
    n = logits.data.shape[0]
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    data = np.asarray((lse - z[np.arange(n), labels]).mean())

    def backward(g):
        probs = softmax(logits.data)
        probs[np.arange(n), labels] -= 1.0
        logits._accumulate(probs * (float(g) / n))

    return _make(data, (logits,), backward)
