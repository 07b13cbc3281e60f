"""Tensor-network semantics of ZX diagrams.

This is the independent correctness oracle for the rewrite rules: a diagram
is contracted to the matrix it denotes, and two diagrams are compared up to
a global nonzero scalar.  Contraction picks, at every step, the pair of
tensors sharing an index whose contraction yields the smallest intermediate
tensor; the result is exact up to float error regardless of order.
"""

from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np

from .angles import Angle
from .diagram import BOUNDARY_KINDS, Diagram, NodeKind
from .errors import (
    DimensionMismatchError,
    OracleSizeError,
    SemanticsError,
    ZeroMatrixError,
)

_HADAMARD = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=np.complex128) / math.sqrt(2.0)
_IDENTITY2 = np.eye(2, dtype=np.complex128)

DEFAULT_MAX_INDICES = 24


def spider_tensor(kind: NodeKind, angle: float, n_in: int, n_out: int) -> np.ndarray:
    """Matrix of a single spider, shape (2**n_out, 2**n_in).

    A Z spider is 1 on the all-zeros entry and e^{i*angle} on the all-ones
    entry of the computational basis; an X spider is the same in the
    Hadamard-rotated basis.
    """
    if kind not in (NodeKind.Z, NodeKind.X):
        raise ValueError(f"not a spider kind: {kind}")
    rows, cols = 2**n_out, 2**n_in
    mat = np.zeros((rows, cols), dtype=np.complex128)
    mat[0, 0] += 1.0
    mat[rows - 1, cols - 1] += np.exp(1j * angle)
    if kind is NodeKind.X:
        h_out = _kron_pow(_HADAMARD, n_out)
        h_in = _kron_pow(_HADAMARD, n_in)
        mat = h_out @ mat @ h_in
    return mat


def _kron_pow(m: np.ndarray, n: int) -> np.ndarray:
    out = np.eye(1, dtype=np.complex128)
    for _ in range(n):
        out = np.kron(out, m)
    return out


def _spider_nd(kind: NodeKind, angle: float, degree: int) -> np.ndarray:
    """Spider as a rank-`degree` tensor with legs in arbitrary order (symmetric)."""
    return spider_tensor(kind, angle, 0, degree).reshape((2,) * degree)


class _TensorFactor:
    __slots__ = ("array", "indices")

    def __init__(self, array: np.ndarray, indices: list[int]):
        self.array = array
        self.indices = indices


def _contract_pair(a: _TensorFactor, b: _TensorFactor) -> _TensorFactor:
    shared = [i for i in a.indices if i in b.indices]
    ax_a = [a.indices.index(i) for i in shared]
    ax_b = [b.indices.index(i) for i in shared]
    arr = np.tensordot(a.array, b.array, axes=(ax_a, ax_b))
    rest_a = [i for i in a.indices if i not in shared]
    rest_b = [i for i in b.indices if i not in shared]
    return _TensorFactor(arr, rest_a + rest_b)


def semantics(
    d: Diagram,
    assignment: Mapping[int, float] | None = None,
    max_indices: int = DEFAULT_MAX_INDICES,
    _order_rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Contract a diagram to its matrix, shape (2**outputs, 2**inputs).

    Output wire i is row bit i and input wire i is column bit i, with wire 0
    as the most significant bit.  Every free symbol in the diagram must have
    a value in ``assignment``.  Diagrams whose contracted (non-boundary)
    index count exceeds ``max_indices`` are refused.

    ``_order_rng`` randomizes tie-breaking between equally-sized contraction
    candidates; used by tests to confirm order independence.
    """
    missing = d.free_symbols() - set(assignment or {})
    if missing:
        raise SemanticsError(f"symbols without assigned values: {sorted(missing)}")

    # One index per edge; edges between two boundary nodes are split with an
    # explicit identity tensor so each open wire has its own index.
    edge_index = {e: i for i, e in enumerate(d.edges())}
    next_index = len(edge_index)
    factors: list[_TensorFactor] = []
    open_out: dict[int, int] = {}  # output node -> index
    open_in: dict[int, int] = {}

    boundary_edges = set()
    for (u, v) in d.edges():
        if d.is_boundary(u) and d.is_boundary(v):
            iu, iv = edge_index[(u, v)], next_index
            next_index += 1
            factors.append(_TensorFactor(_IDENTITY2.copy(), [iu, iv]))
            _record_open(d, u, iu, open_in, open_out)
            _record_open(d, v, iv, open_in, open_out)
            boundary_edges.add((u, v))
        else:
            for end in (u, v):
                if d.is_boundary(end):
                    _record_open(d, end, edge_index[(u, v)], open_in, open_out)
                    boundary_edges.add((u, v))

    open_indices = set(open_in.values()) | set(open_out.values())
    contracted = next_index - len(open_indices)
    if contracted > max_indices:
        raise OracleSizeError(
            f"{contracted} contracted indices exceed the cap of {max_indices}"
        )

    for n in d.nodes():
        kind = d.kind(n)
        if kind in BOUNDARY_KINDS:
            continue
        legs = [edge_index[e] for e in sorted(map(lambda w: _ekey(n, w), d.neighbors(n)))]
        if kind is NodeKind.H:
            arr: np.ndarray = _HADAMARD.copy()
        else:
            arr = _spider_nd(kind, d.angle(n).radians(assignment), len(legs))
        factors.append(_TensorFactor(arr, legs))

    if _order_rng is not None:
        perm = _order_rng.permutation(len(factors))
        factors = [factors[i] for i in perm]

    result = _contract_all(factors)

    # Arrange open legs: outputs in wire order, then inputs in wire order.
    out_idx = [open_out[n] for n in d.outputs]
    in_idx = [open_in[n] for n in d.inputs]
    want = out_idx + in_idx
    if sorted(want) != sorted(result.indices):
        raise SemanticsError("internal: open indices do not match boundary wires")
    perm_axes = [result.indices.index(i) for i in want]
    arr = np.transpose(result.array, perm_axes) if perm_axes else result.array
    return arr.reshape((2 ** len(out_idx), 2 ** len(in_idx)))


def _ekey(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u <= v else (v, u)


def _record_open(d: Diagram, node: int, index: int, open_in: dict, open_out: dict) -> None:
    if d.kind(node) is NodeKind.IN:
        open_in[node] = index
    else:
        open_out[node] = index


def _contract_all(factors: list[_TensorFactor]) -> _TensorFactor:
    if not factors:
        return _TensorFactor(np.array(1.0 + 0j), [])
    pool = list(factors)
    while len(pool) > 1:
        best: tuple[int, int, int] | None = None  # (size, i, j)
        for i in range(len(pool)):
            for j in range(i + 1, len(pool)):
                if any(ix in pool[j].indices for ix in pool[i].indices):
                    size = len(set(pool[i].indices) ^ set(pool[j].indices))
                    if best is None or size < best[0]:
                        best = (size, i, j)
        if best is None:
            # Disconnected components: outer product of the two smallest.
            order = sorted(range(len(pool)), key=lambda k: pool[k].array.size)
            i, j = sorted(order[:2])
        else:
            _, i, j = best
        merged = _contract_pair(pool[i], pool[j])
        pool = [t for k, t in enumerate(pool) if k not in (i, j)] + [merged]
    return pool[0]


def equivalent_up_to_scalar(a: np.ndarray, b: np.ndarray, tol: float = 1e-9) -> bool:
    """True iff a == lam * b for some nonzero complex lam, within tol.

    Both matrices are max-normalized first so tol acts on relative scale;
    lam is then read off the largest-magnitude component of b.  Shape
    mismatch and the doubly-zero case raise distinct errors.
    """
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"shape {a.shape} vs {b.shape}")
    ma = float(np.max(np.abs(a))) if a.size else 0.0
    mb = float(np.max(np.abs(b))) if b.size else 0.0
    if ma <= tol and mb <= tol:
        raise ZeroMatrixError("both matrices are numerically zero")
    if ma <= tol or mb <= tol:
        return False
    an, bn = a / ma, b / mb
    flat = np.argmax(np.abs(bn))
    lam = an.flat[flat] / bn.flat[flat]
    return bool(np.max(np.abs(an - lam * bn)) <= tol)


def scalar_deviation(a: np.ndarray, b: np.ndarray) -> float:
    """Max-norm residual of the best scalar match (same convention as above)."""
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"shape {a.shape} vs {b.shape}")
    ma = float(np.max(np.abs(a)))
    mb = float(np.max(np.abs(b)))
    if ma == 0.0 and mb == 0.0:
        return 0.0
    if ma == 0.0 or mb == 0.0:
        return float("inf")
    an, bn = a / ma, b / mb
    flat = np.argmax(np.abs(bn))
    lam = an.flat[flat] / bn.flat[flat]
    return float(np.max(np.abs(an - lam * bn)))


def random_assignments(
    d_before: Diagram,
    d_after: Diagram,
    rng: np.random.Generator,
    count: int = 2,
) -> list[dict[int, float]]:
    """Independent random values for every symbol appearing on either side."""
    syms = sorted(d_before.free_symbols() | d_after.free_symbols())
    return [
        {s: float(rng.uniform(0.0, 2.0 * math.pi)) for s in syms} for _ in range(count)
    ]


def rewrite_preserves_semantics(
    before: Diagram,
    after: Diagram,
    rng: np.random.Generator,
    tol: float = 1e-9,
    max_indices: int = DEFAULT_MAX_INDICES,
) -> bool:
    """Oracle check: equal matrices up to scalar under two random assignments.

    A diagram whose matrix is numerically zero is degenerate: it has no
    representative up to nonzero scalar, and dropping a boundary-disconnected
    component with a vanishing scalar legitimately maps it to a nonzero
    diagram.  Rewrites of zero diagrams are therefore accepted vacuously.
    Killing a nonzero diagram still fails.
    """
    for assignment in random_assignments(before, after, rng):
        ma = semantics(before, assignment, max_indices=max_indices)
        if float(np.max(np.abs(ma))) <= tol:
            continue
        mb = semantics(after, assignment, max_indices=max_indices)
        if not equivalent_up_to_scalar(ma, mb, tol=tol):
            return False
    return True
