"""Dense tensors with reverse-mode differentiation over a fixed op vocabulary.

The vocabulary covers what the losses and encoders in this repo need: linear
maps, elementwise arithmetic, logsumexp, normalization helpers, gather and
grouped-sum primitives. Reductions that must be exactly invariant under batch
or node permutation (``csum``, ``logsumexp``, ``group_sum_rows``) accumulate
over value-sorted operands, so equal multisets produce bit-identical sums in
double precision. ``rowmap`` is a matmul whose result for each row depends
only on that row's values, not its position.
"""
from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from ..errors import NonFiniteError, ParameterError, ShapeError

_DTYPES = {"double": np.float64, "single": np.float32}
_default_dtype = np.float64

# Additive mask constant: large enough that exp underflows to exactly 0 after
# the max shift, small enough to keep every stored value finite.
MASK_NEG = -1e30


def set_precision(mode: str) -> None:
    """Select the dtype used for newly created leaf tensors."""
    global _default_dtype
    if mode not in _DTYPES:
        raise ParameterError(f"unknown precision mode {mode!r}; use 'double' or 'single'")
    _default_dtype = _DTYPES[mode]


def get_precision() -> str:
    return "double" if _default_dtype is np.float64 else "single"


class Tensor:
    """A dense array node. Data is frozen once constructed; ``backward()`` on a
    scalar fills ``.grad`` on every node that contributed to it."""

    __slots__ = ("data", "grad", "name", "_parents", "_backward")

    def __init__(self, data, _parents=(), _backward=None, name=None):
        arr = np.asarray(data)
        if arr.dtype.kind != "f":
            arr = arr.astype(_default_dtype)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"non-finite values in tensor {name or '<unnamed>'}")
        self.data = arr
        self.grad = None
        self.name = name
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def backward(self) -> None:
        if self.data.size != 1:
            raise ShapeError("backward() requires a scalar output")
        order = _toposort(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar --------------------------------------------------
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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)

    def transpose(self, axes=None):
        return transpose(self, axes)

    def __repr__(self):
        return f"Tensor(shape={tuple(self.shape)}, name={self.name!r})"


def tensor(data, name=None) -> Tensor:
    """Create a leaf tensor, copying the input so the leaf owns its storage."""
    arr = np.array(data, dtype=_default_dtype)
    return Tensor(arr, name=name)


def constant(data, name=None) -> Tensor:
    """Leaf tensor for fixed values (masks, targets); grads are ignored."""
    return tensor(data, name=name)


def zeros(shape, name=None) -> Tensor:
    return Tensor(np.zeros(shape, dtype=_default_dtype), name=name)


def ones(shape, name=None) -> Tensor:
    return Tensor(np.ones(shape, dtype=_default_dtype), name=name)


def zero_grads(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.grad = None


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
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
    if isinstance(x, Tensor):
        return x
    return tensor(x)


def _accum(t: Tensor, g: np.ndarray) -> None:
    t.grad = g if t.grad is None else t.grad + g


def _result(arr: np.ndarray, parents, backward, name: str) -> Tensor:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite result from {name}")
    return Tensor(arr, _parents=parents, _backward=backward, name=name)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# -- elementwise arithmetic ----------------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data + b.data

    def bw(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _result(out_data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data - b.data

    def bw(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    return _result(out_data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data * b.data

    def bw(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _result(out_data, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data / b.data

    def bw(g):
        _accum(a, _unbroadcast(g / b.data, a.data.shape))
        _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _result(out_data, (a, b), bw, "div")


def neg(a) -> Tensor:
    a = _as_tensor(a)

    def bw(g):
        _accum(a, -g)

    return _result(-a.data, (a,), bw, "neg")


def exp(a) -> Tensor:
    a = _as_tensor(a)
    out_data = np.exp(a.data)

    def bw(g):
        _accum(a, g * out_data)

    return _result(out_data, (a,), bw, "exp")


def log(a) -> Tensor:
    a = _as_tensor(a)
    out_data = np.log(a.data)

    def bw(g):
        _accum(a, g / a.data)

    return _result(out_data, (a,), bw, "log")


def power(a, p: float) -> Tensor:
    a = _as_tensor(a)
    p = float(p)
    out_data = np.power(a.data, p)

    def bw(g):
        if p == 0.0:
            _accum(a, np.zeros_like(a.data))
        else:
            _accum(a, g * p * np.power(a.data, p - 1.0))

    return _result(out_data, (a,), bw, "power")


def relu(a) -> Tensor:
    a = _as_tensor(a)
    keep = a.data > 0

    def bw(g):
        _accum(a, g * keep)

    return _result(np.where(keep, a.data, 0.0), (a,), bw, "relu")


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    x = a.data
    out_data = np.empty_like(x)
    pos = x >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out_data[~pos] = ex / (1.0 + ex)

    def bw(g):
        _accum(a, g * out_data * (1.0 - out_data))

    return _result(out_data, (a,), bw, "sigmoid")


def softplus(a) -> Tensor:
    a = _as_tensor(a)
    x = a.data
    out_data = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))

    def bw(g):
        s = np.empty_like(x)
        pos = x >= 0
        s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        s[~pos] = ex / (1.0 + ex)
        _accum(a, g * s)

    return _result(out_data, (a,), bw, "softplus")


def clip(a, lo: float, hi: float) -> Tensor:
    a = _as_tensor(a)
    out_data = np.clip(a.data, lo, hi)
    passthrough = (a.data >= lo) & (a.data <= hi)

    def bw(g):
        _accum(a, g * passthrough)

    return _result(out_data, (a,), bw, "clip")


def maximum(a, b) -> Tensor:
    """Elementwise max; on exact ties the full subgradient goes to ``a``."""
    a, b = _as_tensor(a), _as_tensor(b)
    take_a = a.data >= b.data
    out_data = np.where(take_a, a.data, b.data)

    def bw(g):
        _accum(a, _unbroadcast(g * take_a, a.data.shape))
        _accum(b, _unbroadcast(g * ~take_a, b.data.shape))

    return _result(out_data, (a, b), bw, "maximum")


# -- shape manipulation ----------------------------------------------------


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    shape = tuple(shape)
    out_data = a.data.reshape(shape)

    def bw(g):
        _accum(a, g.reshape(a.data.shape))

    return _result(out_data, (a,), bw, "reshape")


def transpose(a, axes=None) -> Tensor:
    a = _as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inv = np.argsort(axes)

    def bw(g):
        _accum(a, np.transpose(g, inv))

    return _result(np.transpose(a.data, axes), (a,), bw, "transpose")


def concat(parts: Sequence, axis: int = 0) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat of zero tensors")
    out_data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for p, s, e in zip(parts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(s, e)
            _accum(p, g[tuple(idx)])

    return _result(out_data, tuple(parts), bw, "concat")


def pad_axis(a, axis: int, before: int, after: int) -> Tensor:
    a = _as_tensor(a)
    widths = [(0, 0)] * a.ndim
    widths[axis] = (before, after)
    out_data = np.pad(a.data, widths)

    def bw(g):
        idx = [slice(None)] * g.ndim
        idx[axis] = slice(before, before + a.data.shape[axis])
        _accum(a, g[tuple(idx)])

    return _result(out_data, (a,), bw, "pad_axis")


def slice_axis(a, axis: int, start: int, stop: int) -> Tensor:
    a = _as_tensor(a)
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)
    out_data = a.data[idx]

    def bw(g):
        buf = np.zeros_like(a.data)
        buf[idx] = g
        _accum(a, buf)

    return _result(out_data, (a,), bw, "slice_axis")


# -- linear maps -----------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Matrix product; 2-D or batched 3-D with equal leading dimension."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim not in (2, 3) or b.ndim not in (2, 3) or a.ndim != b.ndim:
        raise ShapeError(f"matmul expects matching 2-D or 3-D operands, got {a.shape} @ {b.shape}")
    out_data = np.matmul(a.data, b.data)

    def bw(g):
        _accum(a, np.matmul(g, np.swapaxes(b.data, -1, -2)))
        _accum(b, np.matmul(np.swapaxes(a.data, -1, -2), g))

    return _result(out_data, (a, b), bw, "matmul")


def rowmap(a, b) -> Tensor:
    """2-D matrix product whose row results are independent of row position.

    Backed by einsum's sum-of-products loop rather than BLAS, so permuting the
    rows of ``a`` permutes the output rows bit-identically. Used where exact
    permutation equivariance is part of the contract.
    """
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"rowmap expects 2-D operands, got {a.shape} @ {b.shape}")
    out_data = np.einsum("ij,jk->ik", a.data, b.data, optimize=False)

    def bw(g):
        _accum(a, np.einsum("ik,jk->ij", g, b.data, optimize=False))
        _accum(b, np.einsum("ij,ik->jk", a.data, g, optimize=False))

    return _result(out_data, (a, b), bw, "rowmap")


# -- gather / grouped sums ---------------------------------------------------


def gather(a, indices, axis: int = 0) -> Tensor:
    """Select rows of ``a`` along axis 0 (duplicates allowed)."""
    a = _as_tensor(a)
    if axis != 0:
        raise ShapeError("gather supports axis=0 only")
    idx = np.asarray(indices, dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= a.data.shape[0]):
        raise ShapeError("gather index out of range")
    out_data = np.take(a.data, idx, axis=0)

    def bw(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, idx, g)
        _accum(a, buf)

    return _result(out_data, (a,), bw, "gather")


def gather2d(a, rows, cols) -> Tensor:
    """Elements ``a[rows[k], cols[k]]`` of a 2-D tensor as a vector."""
    a = _as_tensor(a)
    if a.ndim != 2:
        raise ShapeError("gather2d expects a 2-D tensor")
    r = np.asarray(rows, dtype=np.intp)
    c = np.asarray(cols, dtype=np.intp)
    if r.shape != c.shape:
        raise ShapeError("gather2d row/col index shapes differ")
    out_data = a.data[r, c]

    def bw(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, (r, c), g)
        _accum(a, buf)

    return _result(out_data, (a,), bw, "gather2d")


def group_sum_rows(a, groups: Sequence[Sequence[int]]) -> Tensor:
    """Per-group sum of selected rows, accumulated in value-sorted order.

    Result row ``g`` depends only on the multiset of rows named by
    ``groups[g]``, so relabeling nodes permutes the output exactly. An empty
    group yields a zero row.
    """
    a = _as_tensor(a)
    if a.ndim != 2:
        raise ShapeError("group_sum_rows expects a 2-D tensor")
    n = a.data.shape[0]
    out_data = np.zeros((len(groups), a.data.shape[1]), dtype=a.data.dtype)
    for gi, members in enumerate(groups):
        if len(members) == 0:
            continue
        idx = np.asarray(members, dtype=np.intp)
        if idx.min() < 0 or idx.max() >= n:
            raise ShapeError("group_sum_rows index out of range")
        sub = np.sort(a.data[idx], axis=0)
        out_data[gi] = np.add.reduce(sub, axis=0)

    def bw(g):
        buf = np.zeros_like(a.data)
        for gi, members in enumerate(groups):
            if len(members):
                buf[np.asarray(members, dtype=np.intp)] += g[gi]
        _accum(a, buf)

    return _result(out_data, (a,), bw, "group_sum_rows")


# -- reductions --------------------------------------------------------------


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    out_data = np.sum(a.data, axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, a.data.shape).copy())
        else:
            gk = g if keepdims else np.expand_dims(g, axis)
            _accum(a, np.broadcast_to(gk, a.data.shape).copy())

    return _result(np.asarray(out_data), (a,), bw, "sum")


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def csum(a, axis=None) -> Tensor:
    """Sum with value-sorted accumulation: equal multisets give equal bits."""
    a = _as_tensor(a)
    if axis is None:
        out_data = np.add.reduce(np.sort(a.data, axis=None))

        def bw(g):
            _accum(a, np.broadcast_to(g, a.data.shape).copy())

        return _result(np.asarray(out_data), (a,), bw, "csum")
    out_data = np.add.reduce(np.sort(a.data, axis=axis), axis=axis)

    def bw_axis(g):
        _accum(a, np.broadcast_to(np.expand_dims(g, axis), a.data.shape).copy())

    return _result(np.asarray(out_data), (a,), bw_axis, "csum")


def reduce_max(a) -> Tensor:
    """Global maximum; the subgradient goes to the first (flat-order) argmax."""
    a = _as_tensor(a)
    if a.data.size == 0:
        raise ShapeError("reduce_max of an empty tensor")
    flat_idx = int(np.argmax(a.data))
    out_data = a.data.reshape(-1)[flat_idx]

    def bw(g):
        buf = np.zeros_like(a.data)
        buf.reshape(-1)[flat_idx] = g.reshape(())
        _accum(a, buf)

    return _result(np.asarray(out_data), (a,), bw, "reduce_max")


def logsumexp(a, axis: int, keepdims: bool = False) -> Tensor:
    """Max-shifted log-sum-exp along ``axis`` with value-sorted accumulation.

    Finite for any finite input. Entries shifted by ``MASK_NEG`` underflow to
    an exact zero contribution, which is how masked candidates are excluded.
    """
    a = _as_tensor(a)
    if not isinstance(axis, int):
        raise ShapeError("logsumexp axis must be an integer")
    nd = a.ndim
    if not -nd <= axis < nd:
        raise ShapeError(f"logsumexp axis {axis} invalid for rank {nd}")
    axis = axis % nd
    x = a.data
    m = np.max(x, axis=axis, keepdims=True)
    t = np.exp(x - m)
    s = np.add.reduce(np.sort(t, axis=axis), axis=axis, keepdims=True)
    out_k = m + np.log(s)
    out_data = out_k if keepdims else np.squeeze(out_k, axis=axis)

    def bw(g):
        gk = g if keepdims else np.expand_dims(g, axis)
        _accum(a, np.exp(x - out_k) * gk)

    return _result(out_data, (a,), bw, "logsumexp")


def l2_normalize_rows(a) -> Tensor:
    """Scale each row of a 2-D tensor to unit Euclidean norm."""
    a = _as_tensor(a)
    if a.ndim != 2:
        raise ShapeError("l2_normalize_rows expects a 2-D tensor")
    sq = tsum(mul(a, a), axis=1, keepdims=True)
    if np.any(sq.data <= 0.0):
        raise ParameterError("cannot L2-normalize a zero row")
    return div(a, power(sq, 0.5))
