"""Circuit-to-diagram translation and a direct matrix oracle for circuits."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

from .angles import Angle
from .diagram import Diagram, NodeKind
from .errors import DiagramError


@dataclass(frozen=True)
class ZRot:
    qubit: int
    angle: Angle


@dataclass(frozen=True)
class XRot:
    qubit: int
    angle: Angle


@dataclass(frozen=True)
class HGate:
    qubit: int


@dataclass(frozen=True)
class CNOT:
    control: int
    target: int


@dataclass(frozen=True)
class Swap:
    a: int
    b: int


Gate = Union[ZRot, XRot, HGate, CNOT, Swap]


def from_circuit(gates: Sequence[Gate], n_qubits: int) -> Diagram:
    """Build the diagram of a gate list applied in sequence to ``n_qubits`` wires.

    Z/X rotations become single spiders on their wire, Hadamard gates become
    H nodes, CNOT becomes a connected Z(control)/X(target) spider pair, and
    Swap just exchanges the wire ends.
    """
    if n_qubits < 1:
        raise DiagramError("need at least one qubit")
    d = Diagram()
    ends: list[int] = []
    for _ in range(n_qubits):
        node = d.add_node(NodeKind.IN)
        d.inputs.append(node)
        ends.append(node)

    def extend(qubit: int, kind: NodeKind, angle: Angle | None = None) -> int:
        if not 0 <= qubit < n_qubits:
            raise DiagramError(f"gate references qubit {qubit} outside 0..{n_qubits - 1}")
        node = d.add_node(kind, angle)
        d.add_edge(ends[qubit], node)
        ends[qubit] = node
        return node

    for gate in gates:
        if isinstance(gate, ZRot):
            extend(gate.qubit, NodeKind.Z, gate.angle)
        elif isinstance(gate, XRot):
            extend(gate.qubit, NodeKind.X, gate.angle)
        elif isinstance(gate, HGate):
            extend(gate.qubit, NodeKind.H)
        elif isinstance(gate, CNOT):
            if gate.control == gate.target:
                raise DiagramError("CNOT control equals target")
            c = extend(gate.control, NodeKind.Z, Angle.zero())
            t = extend(gate.target, NodeKind.X, Angle.zero())
            d.add_edge(c, t)
        elif isinstance(gate, Swap):
            if gate.a == gate.b:
                raise DiagramError("Swap wires are equal")
            ends[gate.a], ends[gate.b] = ends[gate.b], ends[gate.a]
        else:
            raise DiagramError(f"unknown gate {gate!r}")

    for q in range(n_qubits):
        node = d.add_node(NodeKind.OUT)
        d.outputs.append(node)
        d.add_edge(ends[q], node)
    d.validate()
    return d


_H = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=np.complex128) / math.sqrt(2.0)


def _zrot(theta: float) -> np.ndarray:
    return np.diag([1.0, np.exp(1j * theta)]).astype(np.complex128)


def _embed_1q(op: np.ndarray, qubit: int, n_qubits: int) -> np.ndarray:
    # Qubit 0 is the most significant bit, i.e. the leftmost kron factor.
    mat = np.eye(1, dtype=np.complex128)
    for q in range(n_qubits):
        mat = np.kron(mat, op if q == qubit else np.eye(2, dtype=np.complex128))
    return mat


def _permutation_gate(perm_bit_fn, n_qubits: int) -> np.ndarray:
    dim = 2**n_qubits
    mat = np.zeros((dim, dim), dtype=np.complex128)
    for col in range(dim):
        bits = [(col >> (n_qubits - 1 - q)) & 1 for q in range(n_qubits)]
        new_bits = perm_bit_fn(bits)
        row = 0
        for b in new_bits:
            row = (row << 1) | b
        mat[row, col] = 1.0
    return mat


def gate_matrix(gate: Gate, n_qubits: int, assignment: Mapping[int, float] | None = None) -> np.ndarray:
    if isinstance(gate, ZRot):
        return _embed_1q(_zrot(gate.angle.radians(assignment)), gate.qubit, n_qubits)
    if isinstance(gate, XRot):
        return _embed_1q(_H @ _zrot(gate.angle.radians(assignment)) @ _H, gate.qubit, n_qubits)
    if isinstance(gate, HGate):
        return _embed_1q(_H, gate.qubit, n_qubits)
    if isinstance(gate, CNOT):
        def flip(bits: list[int]) -> list[int]:
            out = list(bits)
            if out[gate.control]:
                out[gate.target] ^= 1
            return out

        return _permutation_gate(flip, n_qubits)
    if isinstance(gate, Swap):
        def swap(bits: list[int]) -> list[int]:
            out = list(bits)
            out[gate.a], out[gate.b] = out[gate.b], out[gate.a]
            return out

        return _permutation_gate(swap, n_qubits)
    raise DiagramError(f"unknown gate {gate!r}")


def circuit_unitary(
    gates: Sequence[Gate], n_qubits: int, assignment: Mapping[int, float] | None = None
) -> np.ndarray:
    """Ordered matrix product of the gate list (first gate applied first)."""
    mat = np.eye(2**n_qubits, dtype=np.complex128)
    for gate in gates:
        mat = gate_matrix(gate, n_qubits, assignment) @ mat
    return mat
