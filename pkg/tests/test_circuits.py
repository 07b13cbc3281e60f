import math

import numpy as np
import pytest

from zxrl.angles import Angle
from zxrl.circuits import CNOT, HGate, Swap, XRot, ZRot, circuit_unitary, from_circuit
from zxrl.diagram import NodeKind
from zxrl.errors import DiagramError
from zxrl.tensor import equivalent_up_to_scalar, scalar_deviation, semantics

H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)


def test_single_hadamard_unitary():
    assert np.allclose(circuit_unitary([HGate(0)], 1), H)


def test_gate_order_is_left_to_right():
    u = circuit_unitary([ZRot(0, Angle.pi()), HGate(0)], 1)
    assert np.allclose(u, H @ np.diag([1.0, -1.0]))


def test_cnot_unitary():
    cnot = np.array(
        [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
    )
    assert np.allclose(circuit_unitary([CNOT(0, 1)], 2), cnot)
    # control on the lower wire
    flipped = np.array(
        [[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]], dtype=complex
    )
    assert np.allclose(circuit_unitary([CNOT(1, 0)], 2), flipped)


def test_swap_unitary():
    swap = np.array(
        [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex
    )
    assert np.allclose(circuit_unitary([Swap(0, 1)], 2), swap)


def test_from_circuit_structure():
    d = from_circuit([ZRot(0, Angle(1)), CNOT(0, 1), HGate(1)], 2)
    d.validate()
    assert len(d.inputs) == 2 and len(d.outputs) == 2
    kinds = [d.kind(n) for n in d.nodes()]
    assert kinds.count(NodeKind.H) == 1
    assert kinds.count(NodeKind.Z) == 2  # rotation + CNOT control
    assert kinds.count(NodeKind.X) == 1  # CNOT target


def test_from_circuit_rejects_bad_wires():
    with pytest.raises(DiagramError):
        from_circuit([HGate(2)], 2)
    with pytest.raises(DiagramError):
        from_circuit([CNOT(0, 0)], 2)


@pytest.mark.parametrize("seed", range(8))
def test_diagram_matches_unitary(seed):
    rng = np.random.default_rng(seed)
    n_qubits = int(rng.integers(1, 4))
    gates = []
    for _ in range(int(rng.integers(1, 7))):
        kind = int(rng.integers(0, 5))
        q = int(rng.integers(0, n_qubits))
        if kind == 0:
            gates.append(ZRot(q, Angle(int(rng.integers(0, 4)))))
        elif kind == 1:
            gates.append(XRot(q, Angle(int(rng.integers(0, 4)))))
        elif kind == 2:
            gates.append(HGate(q))
        elif kind == 3 and n_qubits > 1:
            t = int(rng.integers(0, n_qubits - 1))
            t = t if t != q else n_qubits - 1
            gates.append(CNOT(q, t))
        elif kind == 4 and n_qubits > 1:
            t = int(rng.integers(0, n_qubits - 1))
            t = t if t != q else n_qubits - 1
            gates.append(Swap(q, t))
    if not gates:
        gates = [HGate(0)]
    d = from_circuit(gates, n_qubits)
    d.validate()
    got = semantics(d, {})
    want = circuit_unitary(gates, n_qubits)
    assert equivalent_up_to_scalar(got, want)
    assert scalar_deviation(got, want) < 1e-9


def test_symbolic_rotation_passes_through():
    gates = [ZRot(0, Angle.symbol(0)), XRot(0, Angle(0, {1: 2}))]
    d = from_circuit(gates, 1)
    asg = {0: 0.321, 1: 1.777}
    got = semantics(d, asg)
    want = circuit_unitary(gates, 1, asg)
    assert equivalent_up_to_scalar(got, want)
