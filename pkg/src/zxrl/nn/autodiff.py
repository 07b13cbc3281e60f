"""Minimal reverse-mode automatic differentiation on float64 numpy arrays.

A Tensor wraps an ndarray plus the closure that routes an incoming gradient
to its parents.  Calling ``backward()`` on a scalar walks the tape in reverse
topological order.  Only the operations the graph network and the PPO losses
need are provided; sparse gather/scatter/segment reductions all go through
``csr_apply`` with a constant scipy CSR matrix, whose adjoint is the
transposed matrix.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse


class Tensor:
    __slots__ = ("value", "grad", "parents", "backward_fn", "requires_grad")

    def __init__(self, value, parents=(), backward_fn=None, requires_grad=False):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self):
        return self.value.shape

    def backward(self):
        if self.value.size != 1:
            raise ValueError("backward() needs a scalar loss")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                stack.append((p, False))
        self.grad = np.ones_like(self.value)
        for node in reversed(order):
            if node.backward_fn is None or node.grad is None:
                continue
            for parent, contrib in node.backward_fn(node.grad):
                if not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.value)
                parent.grad += contrib

    def item(self) -> float:
        return float(self.value.reshape(()))

    # Operator sugar keeps the network code readable.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def parameter(value) -> Tensor:
    return Tensor(np.array(value, dtype=np.float64), requires_grad=True)


def constant(value) -> Tensor:
    return Tensor(value)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to the shape the operand was broadcast up from."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def bwd(g):
        return ((a, _unbroadcast(g, a.value.shape)), (b, _unbroadcast(g, b.value.shape)))

    return Tensor(a.value + b.value, (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def bwd(g):
        return ((a, _unbroadcast(g, a.value.shape)), (b, _unbroadcast(-g, b.value.shape)))

    return Tensor(a.value - b.value, (a, b), bwd)


def mul(a, b) -> Tensor:
    if isinstance(b, (int, float)):
        a = _as_tensor(a)
        s = float(b)

        def bwd_scalar(g):
            return ((a, g * s),)

        return Tensor(a.value * s, (a,), bwd_scalar)
    a, b = _as_tensor(a), _as_tensor(b)

    def bwd(g):
        return (
            (a, _unbroadcast(g * b.value, a.value.shape)),
            (b, _unbroadcast(g * a.value, b.value.shape)),
        )

    return Tensor(a.value * b.value, (a, b), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    def bwd(g):
        return ((a, g @ b.value.T), (b, a.value.T @ g))

    return Tensor(a.value @ b.value, (a, b), bwd)


def csr_apply(m: sparse.csr_matrix, x: Tensor) -> Tensor:
    """y = m @ x with a constant sparse matrix; adjoint is m.T @ g.

    Covers row gather (one-hot rows), scatter-add / segment sum (one-hot
    columns), duplication, permutation, and mean pooling (weighted rows).
    """

    def bwd(g):
        return ((x, m.T @ g),)

    return Tensor(m @ x.value, (x,), bwd)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.value)

    def bwd(g):
        return ((x, g * (1.0 - y * y)),)

    return Tensor(y, (x,), bwd)


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.value)

    def bwd(g):
        return ((x, g * y),)

    return Tensor(y, (x,), bwd)


def log(x: Tensor) -> Tensor:
    def bwd(g):
        return ((x, g / x.value),)

    return Tensor(np.log(x.value), (x,), bwd)


def concat(parts: list[Tensor], axis: int = 1) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    sizes = [p.value.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        out = []
        for p, lo, hi in zip(parts, offsets, offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            out.append((p, g[tuple(idx)]))
        return out

    return Tensor(np.concatenate([p.value for p in parts], axis=axis), tuple(parts), bwd)


def reshape(x: Tensor, shape) -> Tensor:
    def bwd(g):
        return ((x, g.reshape(x.value.shape)),)

    return Tensor(x.value.reshape(shape), (x,), bwd)


def sum_all(x: Tensor) -> Tensor:
    def bwd(g):
        return ((x, np.full_like(x.value, float(g))),)

    return Tensor(x.value.sum(), (x,), bwd)


def mean_all(x: Tensor) -> Tensor:
    n = x.value.size

    def bwd(g):
        return ((x, np.full_like(x.value, float(g) / n)),)

    return Tensor(x.value.mean(), (x,), bwd)


def where_mask(keep: np.ndarray, x: Tensor, fill: float) -> Tensor:
    """Entries where ``keep`` is False become ``fill``; no gradient there."""
    keep = np.asarray(keep, dtype=bool)

    def bwd(g):
        return ((x, np.where(keep, g, 0.0)),)

    return Tensor(np.where(keep, x.value, fill), (x,), bwd)


def minimum(a: Tensor, b: Tensor) -> Tensor:
    take_a = a.value <= b.value

    def bwd(g):
        return ((a, np.where(take_a, g, 0.0)), (b, np.where(take_a, 0.0, g)))

    return Tensor(np.minimum(a.value, b.value), (a, b), bwd)


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    inside = (x.value >= lo) & (x.value <= hi)

    def bwd(g):
        return ((x, np.where(inside, g, 0.0)),)

    return Tensor(np.clip(x.value, lo, hi), (x,), bwd)


def segment_logsumexp(
    x: Tensor,
    starts: np.ndarray,
    seg: sparse.csr_matrix,
    expand: sparse.csr_matrix,
) -> Tensor:
    """Per-segment log(sum(exp(x))) broadcast back to the entries of x.

    ``x`` is an (L, 1) column whose rows form contiguous segments beginning
    at ``starts``.  ``seg`` (S x L) sums entries into segments and ``expand``
    (L x S) copies one value per segment back out.  The per-segment max is a
    constant shift, the standard stable formulation; -inf entries (masked
    logits) contribute exp(-inf) = 0 and receive no gradient.
    """
    vals = x.value.reshape(-1)
    maxes = np.maximum.reduceat(vals, starts)
    shift = (expand @ maxes.reshape(-1, 1))
    e = exp(sub(x, Tensor(shift)))
    total = csr_apply(seg, e)
    lse = add(log(total), Tensor(maxes.reshape(-1, 1)))
    return csr_apply(expand, lse)
