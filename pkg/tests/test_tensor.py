import math

import numpy as np
import pytest

from zxrl.angles import Angle
from zxrl.diagram import Diagram, NodeKind
from zxrl.errors import DimensionMismatchError, OracleSizeError, ZeroMatrixError
from zxrl.tensor import (
    equivalent_up_to_scalar,
    random_assignments,
    rewrite_preserves_semantics,
    scalar_deviation,
    semantics,
    spider_tensor,
)

from conftest import build_diagram, random_diagram, wire_chain

H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)


def test_z_spider_is_phase_diagonal():
    alpha = 0.7391
    m = spider_tensor(NodeKind.Z, alpha, 1, 1)
    assert np.allclose(m, np.diag([1.0, np.exp(1j * alpha)]))


def test_z_spider_higher_arity_entries():
    m = spider_tensor(NodeKind.Z, math.pi / 2, 2, 1)  # two inputs, one output
    expect = np.zeros((2, 4), dtype=complex)
    expect[0, 0] = 1.0
    expect[1, 3] = np.exp(1j * math.pi / 2)
    assert np.allclose(m, expect)


def test_x_spider_is_hadamard_conjugated():
    alpha = 1.234
    z = spider_tensor(NodeKind.Z, alpha, 1, 1)
    x = spider_tensor(NodeKind.X, alpha, 1, 1)
    assert np.allclose(x, H @ z @ H)


def test_phaseless_x_state_is_zero_ket():
    # One output leg, no inputs: |0> up to scalar.
    m = spider_tensor(NodeKind.X, 0.0, 0, 1)
    assert equivalent_up_to_scalar(m, np.array([[1.0], [0.0]]))


def test_pi_x_state_is_one_ket():
    m = spider_tensor(NodeKind.X, math.pi, 0, 1)
    assert equivalent_up_to_scalar(m, np.array([[0.0], [1.0]]))


def test_bare_wire_is_identity():
    d = Diagram()
    i = d.add_node(NodeKind.IN)
    o = d.add_node(NodeKind.OUT)
    d.add_edge(i, o)
    d.inputs, d.outputs = [i], [o]
    assert np.allclose(semantics(d, {}), np.eye(2))


def test_single_spider_wire():
    d = wire_chain([(NodeKind.Z, Angle.symbol(0))])
    val = 0.9182
    assert np.allclose(semantics(d, {0: val}), np.diag([1.0, np.exp(1j * val)]))


def test_hadamard_node_semantics():
    d = wire_chain([(NodeKind.Z, Angle.zero())])
    # splice an H between the spider and the output
    d.remove_edge(0, 2)
    h = d.add_node(NodeKind.H)
    d.add_edge(0, h)
    d.add_edge(h, 2)
    assert equivalent_up_to_scalar(semantics(d, {}), H)


def test_half_pi_chain_is_hadamard():
    d = wire_chain(
        [
            (NodeKind.Z, Angle.half_pi()),
            (NodeKind.X, Angle.half_pi()),
            (NodeKind.Z, Angle.half_pi()),
        ]
    )
    assert equivalent_up_to_scalar(semantics(d, {}), H)
    assert scalar_deviation(semantics(d, {}), H) < 1e-12


def test_cnot_pair():
    d = Diagram()
    z = d.add_node(NodeKind.Z, Angle.zero())
    x = d.add_node(NodeKind.X, Angle.zero())
    d.add_edge(z, x)
    i0, i1 = d.add_node(NodeKind.IN), d.add_node(NodeKind.IN)
    o0, o1 = d.add_node(NodeKind.OUT), d.add_node(NodeKind.OUT)
    d.add_edge(i0, z)
    d.add_edge(z, o0)
    d.add_edge(i1, x)
    d.add_edge(x, o1)
    d.inputs, d.outputs = [i0, i1], [o0, o1]
    cnot = np.array(
        [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
    )
    assert equivalent_up_to_scalar(semantics(d, {}), cnot)


def test_output_wire_zero_is_most_significant():
    # Z(pi) on wire 0 only: phase flip on the first qubit.
    d = Diagram()
    z = d.add_node(NodeKind.Z, Angle.pi())
    i0, i1 = d.add_node(NodeKind.IN), d.add_node(NodeKind.IN)
    o0, o1 = d.add_node(NodeKind.OUT), d.add_node(NodeKind.OUT)
    d.add_edge(i0, z)
    d.add_edge(z, o0)
    d.add_edge(i1, o1)
    d.inputs, d.outputs = [i0, i1], [o0, o1]
    expect = np.kron(np.diag([1.0, -1.0]), np.eye(2))
    assert np.allclose(semantics(d, {}), expect)


def test_contraction_order_independent(rng):
    for _ in range(10):
        d = random_diagram(rng)
        assignment = {s: float(rng.uniform(0, 2 * math.pi)) for s in d.free_symbols()}
        a = semantics(d, assignment, _order_rng=np.random.default_rng(1))
        b = semantics(d, assignment, _order_rng=np.random.default_rng(999))
        assert np.allclose(a, b, atol=1e-12)


def test_size_cap_raises():
    d = Diagram()
    prev = d.add_node(NodeKind.IN)
    d.inputs = [prev]
    for _ in range(30):
        z = d.add_node(NodeKind.Z, Angle.zero())
        d.add_edge(prev, z)
        prev = z
    o = d.add_node(NodeKind.OUT)
    d.add_edge(prev, o)
    d.outputs = [o]
    with pytest.raises(OracleSizeError):
        semantics(d, {}, max_indices=24)
    semantics(d, {}, max_indices=40)  # same diagram fits a higher cap


def test_equivalent_up_to_scalar_finds_lambda():
    a = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=complex)
    lam = 3.7 * np.exp(0.4j)
    assert equivalent_up_to_scalar(lam * a, a)
    assert equivalent_up_to_scalar(a, lam * a)
    b = a.copy()
    b[0, 0] += 0.01
    assert not equivalent_up_to_scalar(a, b)


def test_equivalent_up_to_scalar_errors():
    a = np.eye(2, dtype=complex)
    with pytest.raises(DimensionMismatchError):
        equivalent_up_to_scalar(a, np.eye(4, dtype=complex))
    with pytest.raises(ZeroMatrixError):
        equivalent_up_to_scalar(np.zeros((2, 2)), np.zeros((2, 2)))
    assert not equivalent_up_to_scalar(a, np.zeros((2, 2)))
    assert not equivalent_up_to_scalar(np.zeros((2, 2)), a)


def test_scalar_deviation_limits():
    a = np.eye(2, dtype=complex)
    assert scalar_deviation(2j * a, a) == pytest.approx(0.0, abs=1e-15)
    assert scalar_deviation(np.zeros((2, 2)), np.zeros((2, 2))) == 0.0
    assert scalar_deviation(a, np.zeros((2, 2))) == float("inf")


def test_random_assignments_cover_both_sides():
    a = wire_chain([(NodeKind.Z, Angle.symbol(0))])
    b = wire_chain([(NodeKind.X, Angle.symbol(1))])
    rng = np.random.default_rng(0)
    assignments = random_assignments(a, b, rng)
    assert len(assignments) == 2
    for asg in assignments:
        assert set(asg) == {0, 1}
    assert assignments[0] != assignments[1]


def _zero_tensor_diagram():
    """Connected 1-in/1-out diagram whose matrix is identically zero."""
    d = build_diagram(
        [
            (NodeKind.Z, Angle.zero()),
            (NodeKind.X, Angle.pi()),
            (NodeKind.Z, Angle.pi()),
            (NodeKind.X, Angle.zero()),
            NodeKind.IN,
            NodeKind.OUT,
        ],
        [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (1, 4), (2, 3), (3, 5)],
        inputs=[4],
        outputs=[5],
    )
    assert np.abs(semantics(d, {})).max() < 1e-12
    return d


def test_zero_diagram_rewrites_pass_vacuously(rng):
    before = _zero_tensor_diagram()
    anything = wire_chain([(NodeKind.Z, Angle(1))])
    assert rewrite_preserves_semantics(before, anything, rng)


def test_killing_a_nonzero_diagram_fails(rng):
    before = wire_chain([(NodeKind.Z, Angle(1))])
    after = _zero_tensor_diagram()
    assert not rewrite_preserves_semantics(before, after, rng)
