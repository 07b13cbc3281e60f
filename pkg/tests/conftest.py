"""Shared helpers: small-diagram builders and oracle assertions."""

import numpy as np
import pytest

from zxrl.angles import Angle
from zxrl.diagram import Diagram, NodeKind
from zxrl.tensor import rewrite_preserves_semantics


def build_diagram(nodes, edges, inputs=(), outputs=()):
    """Construct a diagram from (kind, angle|None) pairs and index edges.

    ``nodes`` entries are either a NodeKind or a (NodeKind, Angle) tuple.
    Node ids are the list positions, which keeps fixtures readable.
    """
    d = Diagram()
    for spec in nodes:
        if isinstance(spec, tuple):
            kind, angle = spec
        else:
            kind, angle = spec, None
        d.add_node(kind, angle)
    for u, v in edges:
        d.add_edge(u, v)
    d.inputs = list(inputs)
    d.outputs = list(outputs)
    d.validate()
    return d


def wire_chain(kinds_angles):
    """IN - spiders... - OUT chain; ids 0..k-1 spiders, then IN, then OUT."""
    d = Diagram()
    spiders = [d.add_node(k, a) for k, a in kinds_angles]
    i = d.add_node(NodeKind.IN)
    o = d.add_node(NodeKind.OUT)
    d.add_edge(i, spiders[0])
    for a, b in zip(spiders, spiders[1:]):
        d.add_edge(a, b)
    d.add_edge(spiders[-1], o)
    d.inputs = [i]
    d.outputs = [o]
    d.validate()
    return d


def assert_sound(before, after, seed=0):
    rng = np.random.default_rng(seed)
    assert rewrite_preserves_semantics(before, after, rng), (
        f"rewrite changed the denotation:\nbefore {before!r} {before.edges()}\n"
        f"after  {after!r} {after.edges()}"
    )


def random_diagram(rng, n_spiders=(4, 8), n_h=(0, 2), io=(1, 2), symbols=True):
    """Small random diagram for property tests.

    Spiders get a mix of quarter-turn and (optionally) symbolic angles,
    Hadamard nodes are wired in and then repaired to degree exactly two;
    repairing one Hadamard can orphan another, so the repair iterates.
    """
    d = Diagram()
    ns = int(rng.integers(n_spiders[0], n_spiders[1] + 1))
    nh = int(rng.integers(n_h[0], n_h[1] + 1))
    sym = 0
    spiders = []
    for _ in range(ns):
        kind = NodeKind.Z if rng.random() < 0.5 else NodeKind.X
        r = rng.random()
        if r < 0.55 or not symbols:
            angle = Angle(int(rng.integers(0, 4)))
        else:
            angle = Angle.symbol(sym)
            sym += 1
        spiders.append(d.add_node(kind, angle))
    hs = [d.add_node(NodeKind.H) for _ in range(nh)]
    pool = spiders + hs
    p = min(1.0, 3.0 / max(1, len(pool) - 1))
    for i in range(len(pool)):
        for j in range(i + 1, len(pool)):
            if rng.random() < p:
                d.add_edge(pool[i], pool[j])
    changed = True
    while changed:
        changed = False
        for h in list(hs):
            if h not in d:
                continue
            nbrs = d.neighbors(h)
            if len(nbrs) < 2:
                d.remove_node(h)
                hs.remove(h)
                changed = True
            elif len(nbrs) > 2:
                for w in nbrs[2:]:
                    d.remove_edge(h, w)
                changed = True
    spiders = [n for n in spiders if d.degree(n) > 0 or rng.random() < 0.5]
    for n in list(d.nodes()):
        if d.is_spider(n) and n not in spiders:
            d.remove_node(n)
    if not d.spiders():
        d.add_node(NodeKind.Z, Angle.zero())
    live = d.spiders()
    for _ in range(int(rng.integers(io[0], io[1] + 1))):
        b = d.add_node(NodeKind.IN)
        d.add_edge(b, live[int(rng.integers(0, len(live)))])
        d.inputs.append(b)
    for _ in range(int(rng.integers(io[0], io[1] + 1))):
        b = d.add_node(NodeKind.OUT)
        d.add_edge(b, live[int(rng.integers(0, len(live)))])
        d.outputs.append(b)
    d.validate()
    return d


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
