"""Local rewrite rules, automatic simplification, and the action mask.

Every rule is a pure function taking a diagram and returning a fresh
:class:`RewriteOutcome` with the rewritten diagram (auto-simplified) and the
reward, defined as the drop in non-boundary node count.  Rule application is
correct up to a global nonzero scalar; the tensor oracle in
:mod:`zxrl.tensor` is the reference for every rule.

Rewrites may transiently create parallel edges and self-loops; those live
only inside a private multigraph scratch structure and are removed by
``auto_simplify`` before a diagram is handed back.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

import numpy as np

from .angles import Angle
from .diagram import BOUNDARY_KINDS, Diagram, NodeKind, edge_key
from .errors import MaskedActionError
from .tensor import equivalent_up_to_scalar


class NodeActionKind(Enum):
    COLOR_CHANGE = 0
    HADAMARD_FUSE = 1
    HADAMARD_UNFUSE = 2
    EULER = 3
    START_UNFUSE = 4
    STOP_UNFUSE = 5


class EdgeActionKind(Enum):
    FUSE = 0
    PI = 1
    COPY = 2
    BIALGEBRA_LEFT = 3
    BIALGEBRA_RIGHT = 4
    MARK_EDGE = 5


NODE_ACTION_KINDS = tuple(NodeActionKind)
EDGE_ACTION_KINDS = tuple(EdgeActionKind)


@dataclass(frozen=True)
class NodeAction:
    node: int
    kind: NodeActionKind


@dataclass(frozen=True)
class EdgeAction:
    edge: tuple[int, int]
    kind: EdgeActionKind


@dataclass(frozen=True)
class StopAction:
    pass


STOP = StopAction()
Action = NodeAction | EdgeAction | StopAction


@dataclass
class RewriteOutcome:
    diagram: Diagram
    reward: int


# -- multigraph scratch ------------------------------------------------------


class _Scratch:
    """Multigraph working copy: edge multiset, self-loops allowed."""

    __slots__ = ("kind", "angle", "edges", "inputs", "outputs", "next_id")

    def __init__(self, d: Diagram):
        self.kind: dict[int, NodeKind] = {n: d.kind(n) for n in d.nodes()}
        self.angle: dict[int, Angle] = {n: d.angle(n) for n in d.spiders()}
        self.edges: Counter[tuple[int, int]] = Counter(d.edges())
        self.inputs = list(d.inputs)
        self.outputs = list(d.outputs)
        self.next_id = d.fresh_id()

    def new_node(self, kind: NodeKind, angle: Angle | None = None) -> int:
        n = self.next_id
        self.next_id += 1
        self.kind[n] = kind
        if kind in (NodeKind.Z, NodeKind.X):
            self.angle[n] = angle if angle is not None else Angle.zero()
        return n

    def add(self, u: int, v: int, mult: int = 1) -> None:
        self.edges[edge_key(u, v)] += mult

    def discard_edge(self, u: int, v: int, mult: int = 1) -> None:
        key = edge_key(u, v)
        self.edges[key] -= mult
        if self.edges[key] <= 0:
            del self.edges[key]

    def incident(self, n: int) -> list[tuple[tuple[int, int], int]]:
        return [(e, m) for e, m in sorted(self.edges.items()) if n in e]

    def degree(self, n: int) -> int:
        deg = 0
        for (u, v), m in self.edges.items():
            if u == n:
                deg += m
            if v == n:
                deg += m  # self-loop counts twice
        return deg

    def drop_node(self, n: int) -> None:
        for e in [e for e in self.edges if n in e]:
            del self.edges[e]
        del self.kind[n]
        self.angle.pop(n, None)

    def to_diagram(self, budget: int | None) -> Diagram:
        d = Diagram()
        for n in sorted(self.kind):
            d.add_node(self.kind[n], self.angle.get(n), node_id=n)
        for (u, v), m in sorted(self.edges.items()):
            assert u != v and m == 1, "simplification left a non-simple edge"
            d.add_edge(u, v)
        d.inputs = list(self.inputs)
        d.outputs = list(self.outputs)
        d.step_budget_remaining = budget
        # Preserve the id counter so fresh ids never collide across steps.
        d._next_id = max(d._next_id, self.next_id)
        return d


def _is_spider(s: _Scratch, n: int) -> bool:
    return s.kind.get(n) in (NodeKind.Z, NodeKind.X)


def _simplify_scratch(s: _Scratch) -> None:
    """Fixpoint of the automatic simplification clauses.

    Per pass, in order: plain self-loops, Hadamard self-loops, parallel-edge
    reduction, serial Hadamard cancellation, identity-spider removal, then
    pruning of components with no boundary node.  Repeats until stable.
    """
    changed = True
    while changed:
        changed = False

        # Self-loops: delete on spiders; an H node with a self-loop is a
        # closed scalar and is deleted outright.
        for (u, v), m in sorted(s.edges.items()):
            if u != v:
                continue
            if s.kind.get(u) is NodeKind.H:
                s.drop_node(u)
            else:
                del s.edges[(u, v)]
            changed = True

        # Hadamard loops: H whose whole degree sits on one spider; remove the
        # H and add pi to that spider's phase.
        for h in [n for n, k in sorted(s.kind.items()) if k is NodeKind.H]:
            inc = s.incident(h)
            if len(inc) == 1 and inc[0][1] == 2:
                (u, v), _ = inc[0]
                other = v if u == h else u
                if _is_spider(s, other):
                    s.drop_node(h)
                    s.angle[other] = s.angle[other] + Angle.pi()
                    changed = True

        # Parallel edges between spiders: same color collapses to one edge,
        # opposite colors cancel pairwise.  Parallel H-H edges form a closed
        # loop; both nodes go away.
        for (u, v), m in sorted(s.edges.items()):
            if u == v or m < 2 or s.edges.get((u, v), 0) != m:
                continue
            ku, kv = s.kind.get(u), s.kind.get(v)
            if _is_spider(s, u) and _is_spider(s, v):
                if ku == kv:
                    s.edges[(u, v)] = 1
                else:
                    rem = m % 2
                    if rem:
                        s.edges[(u, v)] = rem
                    else:
                        del s.edges[(u, v)]
                changed = True
            elif ku is NodeKind.H and kv is NodeKind.H:
                s.drop_node(u)
                s.drop_node(v)
                changed = True
            # spider-H parallels are exactly the Hadamard-loop case above.

        # Serial Hadamard pair: two adjacent degree-2 H nodes splice out.
        for h1 in [n for n, k in sorted(s.kind.items()) if k is NodeKind.H]:
            if s.kind.get(h1) is not NodeKind.H or s.degree(h1) != 2:
                continue
            partner = None
            for (a, b), m in s.incident(h1):
                other = b if a == h1 else a
                if other != h1 and s.kind.get(other) is NodeKind.H and s.degree(other) == 2 and m == 1:
                    partner = other
                    break
            if partner is None:
                continue
            ext: list[int] = []
            for h in (h1, partner):
                for (a, b), m in s.incident(h):
                    o = b if a == h else a
                    if o not in (h1, partner):
                        ext.extend([o] * m)
            s.drop_node(h1)
            s.drop_node(partner)
            if len(ext) == 2:
                s.add(ext[0], ext[1])
            changed = True

        # Identity: concrete phase-0 spider of degree 2 splices out.  The
        # parallel clauses above ran first, so its two neighbors are distinct.
        for n in [n for n in sorted(s.kind) if _is_spider(s, n)]:
            if s.kind.get(n) is None or not _is_spider(s, n):
                continue
            if not s.angle[n].is_zero or s.degree(n) != 2:
                continue
            nbrs: list[int] = []
            loop = False
            for (a, b), m in s.incident(n):
                if a == b:
                    loop = True
                    break
                nbrs.extend([b if a == n else a] * m)
            if loop or len(nbrs) != 2 or nbrs[0] == nbrs[1]:
                continue
            s.drop_node(n)
            s.add(nbrs[0], nbrs[1])
            changed = True

        if _prune_disconnected(s):
            changed = True


def _prune_disconnected(s: _Scratch) -> bool:
    adj: dict[int, set[int]] = {n: set() for n in s.kind}
    for (u, v) in s.edges:
        if u != v:
            adj[u].add(v)
            adj[v].add(u)
    seen: set[int] = set()
    stack = [n for n, k in s.kind.items() if k in BOUNDARY_KINDS]
    seen.update(stack)
    while stack:
        n = stack.pop()
        for w in adj[n]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    doomed = [n for n in s.kind if n not in seen]
    for n in doomed:
        s.drop_node(n)
    return bool(doomed)


def auto_simplify(d: Diagram) -> Diagram:
    """Public fixpoint simplification; idempotent, preserves semantics."""
    s = _Scratch(d)
    _simplify_scratch(s)
    return s.to_diagram(d.step_budget_remaining)


def _finish(d: Diagram, s: _Scratch) -> RewriteOutcome:
    before = d.node_count()
    _simplify_scratch(s)
    out = s.to_diagram(d.step_budget_remaining)
    return RewriteOutcome(out, before - out.node_count())


# -- structural rule preconditions and applications -------------------------


def can_fuse(d: Diagram, edge: tuple[int, int]) -> bool:
    u, v = edge
    return (
        d.has_edge(u, v)
        and d.is_spider(u)
        and d.is_spider(v)
        and d.kind(u) is d.kind(v)
    )


def fuse(d: Diagram, edge: tuple[int, int]) -> RewriteOutcome:
    _require(can_fuse(d, edge), f"fuse not applicable on {edge}")
    u, v = edge_key(*edge)
    s = _Scratch(d)
    s.angle[u] = s.angle[u] + s.angle[v]
    s.discard_edge(u, v)
    for (a, b), m in s.incident(v):
        other = b if a == v else a
        s.add(u, other, m)
    s.drop_node(v)
    return _finish(d, s)


def can_color_change(d: Diagram, node: int) -> bool:
    return node in d and d.is_spider(node)


def color_change(d: Diagram, node: int) -> RewriteOutcome:
    """Flip a spider's color, toggling a Hadamard on each incident edge."""
    _require(can_color_change(d, node), f"color change not applicable on {node}")
    s = _Scratch(d)
    s.kind[node] = NodeKind.X if s.kind[node] is NodeKind.Z else NodeKind.Z
    for (a, b), m in s.incident(node):
        other = b if a == node else a
        s.discard_edge(a, b, m)
        for _ in range(m):
            h = s.new_node(NodeKind.H)
            s.add(node, h)
            s.add(h, other)
    return _finish(d, s)


def _pi_pushers(d: Diagram, edge: tuple[int, int]) -> list[tuple[int, int]]:
    """(pusher, target) orderings that satisfy the pi-rule precondition."""
    u, v = edge_key(*edge)
    if not d.has_edge(u, v):
        return []
    out = []
    for p, t in ((u, v), (v, u)):
        if (
            d.is_spider(p)
            and d.angle(p).is_pi
            and d.degree(p) <= 2
            and d.is_spider(t)
            and d.kind(t) is not d.kind(p)
        ):
            out.append((p, t))
    return out


def can_pi(d: Diagram, edge: tuple[int, int]) -> bool:
    return bool(_pi_pushers(d, edge))


def pi(d: Diagram, edge: tuple[int, int]) -> RewriteOutcome:
    """Push a concrete-pi spider through an opposite-color neighbor.

    The pusher must have degree at most 2.  With degree 2 the pi moves
    through: the target's phase negates and a fresh on-wire pi spider of the
    pusher's color lands on every other edge of the target.  With degree 1
    the pusher is a basis state: target and pusher both vanish and a fresh
    degree-1 pi state of the pusher's color caps each former other-edge (the
    target's phase becomes a global scalar).  If both endpoints qualify, the
    smaller node id pushes.
    """
    pushers = _pi_pushers(d, edge)
    _require(bool(pushers), f"pi not applicable on {edge}")
    p, t = min(pushers)
    s = _Scratch(d)
    color = s.kind[p]
    others: list[int] = []
    for (a, b), m in s.incident(t):
        other = b if a == t else a
        if other != p:
            others.extend([other] * m)
    if s.degree(p) == 2:
        far = next(
            b if a == p else a for (a, b), m in s.incident(p) if (b if a == p else a) != t
        )
        s.drop_node(p)
        s.angle[t] = -s.angle[t]
        s.add(far, t)
        for w in others:
            s.discard_edge(t, w)
            mid = s.new_node(color, Angle.pi())
            s.add(t, mid)
            s.add(mid, w)
    else:
        s.drop_node(p)
        s.drop_node(t)
        for w in others:
            cap = s.new_node(color, Angle.pi())
            s.add(cap, w)
    return _finish(d, s)


def _copy_pushers(d: Diagram, edge: tuple[int, int]) -> list[tuple[int, int]]:
    u, v = edge_key(*edge)
    if not d.has_edge(u, v):
        return []
    out = []
    for p, t in ((u, v), (v, u)):
        if (
            d.is_spider(p)
            and d.degree(p) == 1
            and d.angle(p).is_concrete
            and d.angle(p).quarter_turns in (0, 2)
            and d.is_spider(t)
            and d.kind(t) is not d.kind(p)
            and d.angle(t).is_zero
        ):
            out.append((p, t))
    return out


def can_copy(d: Diagram, edge: tuple[int, int]) -> bool:
    return bool(_copy_pushers(d, edge))


def copy(d: Diagram, edge: tuple[int, int]) -> RewriteOutcome:
    """Copy a degree-1 basis state through a phase-free opposite-color spider."""
    pushers = _copy_pushers(d, edge)
    _require(bool(pushers), f"copy not applicable on {edge}")
    p, t = min(pushers)
    s = _Scratch(d)
    color, phase = s.kind[p], s.angle[p]
    others: list[int] = []
    for (a, b), m in s.incident(t):
        other = b if a == t else a
        if other != p:
            others.extend([other] * m)
    s.drop_node(p)
    s.drop_node(t)
    for w in others:
        cap = s.new_node(color, phase)
        s.add(cap, w)
    return _finish(d, s)


def _bialgebra_pair(d: Diagram, edge: tuple[int, int]) -> tuple[int, int] | None:
    """(z, x) endpoints if the edge joins a valid degree-3 phase-free pair."""
    u, v = edge_key(*edge)
    if not d.has_edge(u, v):
        return None
    for z, x in ((u, v), (v, u)):
        if (
            d.is_spider(z)
            and d.kind(z) is NodeKind.Z
            and d.is_spider(x)
            and d.kind(x) is NodeKind.X
            and d.degree(z) == 3
            and d.degree(x) == 3
            and d.angle(z).is_zero
            and d.angle(x).is_zero
        ):
            return (z, x)
    return None


def can_bialgebra_left(d: Diagram, edge: tuple[int, int]) -> bool:
    return _bialgebra_pair(d, edge) is not None


def bialgebra_left(d: Diagram, edge: tuple[int, int]) -> RewriteOutcome:
    """Expand a connected phase-free degree-3 Z/X pair into its K(2,2) form.

    The two external legs of the old Z end on fresh X spiders and the legs of
    the old X end on fresh Z spiders, with all four cross edges present.
    """
    pair = _bialgebra_pair(d, edge)
    _require(pair is not None, f"bialgebra expansion not applicable on {edge}")
    z, x = pair
    s = _Scratch(d)
    ext_z = [w for w in d.neighbors(z) if w != x]
    ext_x = [w for w in d.neighbors(x) if w != z]
    s.drop_node(z)
    s.drop_node(x)
    new_x = [s.new_node(NodeKind.X) for _ in ext_z]
    new_z = [s.new_node(NodeKind.Z) for _ in ext_x]
    for nx_, w in zip(new_x, ext_z):
        s.add(nx_, w)
    for nz, w in zip(new_z, ext_x):
        s.add(nz, w)
    for nx_ in new_x:
        for nz in new_z:
            s.add(nx_, nz)
    return _finish(d, s)


def _k22_pattern(d: Diagram, edge: tuple[int, int]) -> tuple[list[int], list[int]] | None:
    """Detect the complete-bipartite pattern containing this cross edge.

    Returns (z_side, x_side) node lists (each sorted, length 2) or None.  All
    four nodes must be distinct phase-free degree-3 spiders, fully connected
    across colors, with their third edge leaving the pattern.
    """
    pair = _bialgebra_pair(d, edge)
    if pair is None:
        return None
    z0, x0 = pair

    def candidates(anchor: int, want: NodeKind, exclude: int) -> list[int]:
        return [
            w
            for w in d.neighbors(anchor)
            if w != exclude
            and d.is_spider(w)
            and d.kind(w) is want
            and d.degree(w) == 3
            and d.angle(w).is_zero
        ]

    for x1 in candidates(z0, NodeKind.X, x0):
        for z1 in candidates(x0, NodeKind.Z, z0):
            if z1 == z0 or x1 == x0:
                continue
            group = {z0, z1, x0, x1}
            if len(group) != 4 or not d.has_edge(z1, x1):
                continue
            ok = True
            for n in (z0, z1):
                if set(d.neighbors(n)) & group != {x0, x1}:
                    ok = False
            for n in (x0, x1):
                if set(d.neighbors(n)) & group != {z0, z1}:
                    ok = False
            if ok:
                return (sorted((z0, z1)), sorted((x0, x1)))
    return None


def can_bialgebra_right(d: Diagram, edge: tuple[int, int]) -> bool:
    return _k22_pattern(d, edge) is not None


def bialgebra_right(d: Diagram, edge: tuple[int, int]) -> RewriteOutcome:
    """Collapse a K(2,2) of phase-free degree-3 spiders to a single Z-X pair.

    Inverse of :func:`bialgebra_left`: the fresh X spider takes the Z side's
    external legs, the fresh Z spider takes the X side's.  Applying it to any
    of the four internal edges of one pattern yields the identical diagram.
    """
    pattern = _k22_pattern(d, edge)
    _require(pattern is not None, f"bialgebra collapse not applicable on {edge}")
    z_side, x_side = pattern
    s = _Scratch(d)
    ext_z = [w for n in z_side for w in d.neighbors(n) if w not in x_side]
    ext_x = [w for n in x_side for w in d.neighbors(n) if w not in z_side]
    for n in z_side + x_side:
        s.drop_node(n)
    new_x = s.new_node(NodeKind.X)
    new_z = s.new_node(NodeKind.Z)
    for w in ext_z:
        s.add(new_x, w)
    for w in ext_x:
        s.add(new_z, w)
    s.add(new_x, new_z)
    return _finish(d, s)


# -- Euler-angle rules -------------------------------------------------------

_QT_ANGLES = (0, 1, 2, 3)


def _rot_matrix(kind: NodeKind, radians: float) -> np.ndarray:
    h = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=np.complex128) / math.sqrt(2.0)
    z = np.diag([1.0, np.exp(1j * radians)]).astype(np.complex128)
    return z if kind is NodeKind.Z else h @ z @ h


def _chain(d: Diagram, node: int) -> tuple[int, int, int, int] | None:
    """Wire chain s1-node-s2 of degree-2 spiders with alternating colors.

    Returns (w1, s1, s2, w2) outer endpoints and chain ends (s1 the smaller
    id), or None.  All three spiders must carry concrete angles.
    """
    if node not in d or not d.is_spider(node) or d.degree(node) != 2:
        return None
    if not d.angle(node).is_concrete:
        return None
    s1, s2 = d.neighbors(node)
    for s in (s1, s2):
        if not d.is_spider(s) or d.degree(s) != 2 or not d.angle(s).is_concrete:
            return None
        if d.kind(s) is d.kind(node):
            return None
    if d.kind(s1) is not d.kind(s2):
        return None
    w1 = next(w for w in d.neighbors(s1) if w != node)
    w2 = next(w for w in d.neighbors(s2) if w != node)
    if w1 == s2 or w2 == s1:
        return None  # closed triangle, not a wire chain
    return (w1, s1, s2, w2)


def can_euler(d: Diagram, node: int) -> bool:
    return _chain(d, node) is not None


def euler(d: Diagram, node: int) -> RewriteOutcome:
    """Rewrite a 3-spider rotation chain in the opposite color order.

    Concrete angles are always multiples of pi/2, so the matching triple is
    found by exhaustive search over quarter-turn angles; among matches the
    one with the most zero angles (then lexicographically first) is taken,
    which maximizes follow-up identity simplification.
    """
    chain = _chain(d, node)
    _require(chain is not None, f"euler not applicable on {node}")
    w1, s1, s2, w2 = chain
    outer_kind, inner_kind = d.kind(s1), d.kind(node)
    target = (
        _rot_matrix(outer_kind, d.angle(s2).radians())
        @ _rot_matrix(inner_kind, d.angle(node).radians())
        @ _rot_matrix(outer_kind, d.angle(s1).radians())
    )
    best: tuple[int, int, int] | None = None
    for triple in sorted(
        ((q1, q2, q3) for q1 in _QT_ANGLES for q2 in _QT_ANGLES for q3 in _QT_ANGLES),
        key=lambda t: (sum(1 for q in t if q != 0), t),
    ):
        q1, q2, q3 = triple
        mat = (
            _rot_matrix(inner_kind, q3 * math.pi / 2)
            @ _rot_matrix(outer_kind, q2 * math.pi / 2)
            @ _rot_matrix(inner_kind, q1 * math.pi / 2)
        )
        if equivalent_up_to_scalar(mat, target, tol=1e-6):
            best = triple
            break
    _require(best is not None, "no opposite-order decomposition found")
    s = _Scratch(d)
    for n in (s1, node, s2):
        s.drop_node(n)
    a = s.new_node(inner_kind, Angle(best[0]))
    b = s.new_node(outer_kind, Angle(best[1]))
    c = s.new_node(inner_kind, Angle(best[2]))
    s.add(w1, a)
    s.add(a, b)
    s.add(b, c)
    s.add(c, w2)
    return _finish(d, s)


_H2 = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=np.complex128)


def can_hadamard_fuse(d: Diagram, node: int) -> bool:
    chain = _chain(d, node)
    if chain is None:
        return False
    _, s1, s2, _ = chain
    for n in (s1, node, s2):
        if d.angle(n).quarter_turns not in (1, 3):
            return False
    mat = (
        _rot_matrix(d.kind(s2), d.angle(s2).radians())
        @ _rot_matrix(d.kind(node), d.angle(node).radians())
        @ _rot_matrix(d.kind(s1), d.angle(s1).radians())
    )
    return equivalent_up_to_scalar(mat, _H2, tol=1e-6)


def hadamard_fuse(d: Diagram, node: int) -> RewriteOutcome:
    """Replace a +-pi/2 rotation chain that multiplies to H by an H node."""
    _require(can_hadamard_fuse(d, node), f"hadamard fuse not applicable on {node}")
    w1, s1, s2, w2 = _chain(d, node)
    s = _Scratch(d)
    for n in (s1, node, s2):
        s.drop_node(n)
    h = s.new_node(NodeKind.H)
    s.add(w1, h)
    s.add(h, w2)
    return _finish(d, s)


def can_hadamard_unfuse(d: Diagram, node: int) -> bool:
    return node in d and d.kind(node) is NodeKind.H


def hadamard_unfuse(d: Diagram, node: int) -> RewriteOutcome:
    """Expand an H node into the Z(pi/2)-X(pi/2)-Z(pi/2) chain."""
    _require(can_hadamard_unfuse(d, node), f"hadamard unfuse not applicable on {node}")
    a, b = d.neighbors(node)
    s = _Scratch(d)
    s.drop_node(node)
    z1 = s.new_node(NodeKind.Z, Angle.half_pi())
    x = s.new_node(NodeKind.X, Angle.half_pi())
    z2 = s.new_node(NodeKind.Z, Angle.half_pi())
    s.add(a, z1)
    s.add(z1, x)
    s.add(x, z2)
    s.add(z2, b)
    return _finish(d, s)


# -- unfuse protocol ---------------------------------------------------------


def can_start_unfuse(d: Diagram, node: int) -> bool:
    return node in d and d.is_spider(node) and d.marked_node is None


def start_unfuse(d: Diagram, node: int) -> RewriteOutcome:
    _require(can_start_unfuse(d, node), f"start unfuse not applicable on {node}")
    out = d.copy()
    out.marked_node = node
    return RewriteOutcome(out, 0)


def can_mark_edge(d: Diagram, edge: tuple[int, int]) -> bool:
    key = edge_key(*edge)
    return (
        d.marked_node is not None
        and d.has_edge(*key)
        and d.marked_node in key
        and key not in d.marked_edges
    )


def mark_edge(d: Diagram, edge: tuple[int, int]) -> RewriteOutcome:
    _require(can_mark_edge(d, edge), f"mark edge not applicable on {edge}")
    out = d.copy()
    out.marked_edges.add(edge_key(*edge))
    return RewriteOutcome(out, 0)


def can_stop_unfuse(d: Diagram, node: int) -> bool:
    return d.marked_node is not None and node == d.marked_node


def stop_unfuse(d: Diagram, node: int) -> RewriteOutcome:
    """Split the marked spider: marked edges move to a fresh phase-free twin.

    The fresh spider shares the original's color, carries angle zero, and is
    joined to the original by a new edge; the original keeps its angle.
    Marks are cleared before simplification.
    """
    _require(can_stop_unfuse(d, node), f"stop unfuse not applicable on {node}")
    marked = sorted(d.marked_edges)
    work = d.copy()
    work.marked_node = None
    work.marked_edges = set()
    s = _Scratch(work)
    twin = s.new_node(d.kind(node), Angle.zero())
    for (a, b) in marked:
        other = b if a == node else a
        s.discard_edge(a, b)
        s.add(twin, other)
    s.add(node, twin)
    return _finish(work, s)


# -- dispatch and masking ----------------------------------------------------


_NODE_RULES = {
    NodeActionKind.COLOR_CHANGE: (can_color_change, color_change),
    NodeActionKind.HADAMARD_FUSE: (can_hadamard_fuse, hadamard_fuse),
    NodeActionKind.HADAMARD_UNFUSE: (can_hadamard_unfuse, hadamard_unfuse),
    NodeActionKind.EULER: (can_euler, euler),
    NodeActionKind.START_UNFUSE: (can_start_unfuse, start_unfuse),
    NodeActionKind.STOP_UNFUSE: (can_stop_unfuse, stop_unfuse),
}

_EDGE_RULES = {
    EdgeActionKind.FUSE: (can_fuse, fuse),
    EdgeActionKind.PI: (can_pi, pi),
    EdgeActionKind.COPY: (can_copy, copy),
    EdgeActionKind.BIALGEBRA_LEFT: (can_bialgebra_left, bialgebra_left),
    EdgeActionKind.BIALGEBRA_RIGHT: (can_bialgebra_right, bialgebra_right),
    EdgeActionKind.MARK_EDGE: (can_mark_edge, mark_edge),
}


def action_allowed(d: Diagram, action: Action) -> bool:
    """Mode-aware legality of one action (the mask predicate)."""
    in_unfuse = d.marked_node is not None
    if isinstance(action, StopAction):
        return not in_unfuse
    if isinstance(action, NodeAction):
        if action.node not in d:
            return False
        if in_unfuse and action.kind is not NodeActionKind.STOP_UNFUSE:
            return False
        if not in_unfuse and action.kind is NodeActionKind.STOP_UNFUSE:
            return False
        return _NODE_RULES[action.kind][0](d, action.node)
    if isinstance(action, EdgeAction):
        u, v = action.edge
        if u not in d or v not in d or not d.has_edge(u, v):
            return False
        if in_unfuse != (action.kind is EdgeActionKind.MARK_EDGE):
            return False
        return _EDGE_RULES[action.kind][0](d, action.edge)
    raise TypeError(f"not an action: {action!r}")


def action_mask(d: Diagram) -> set[Action]:
    """Set of all currently legal actions."""
    allowed: set[Action] = set()
    if d.marked_node is not None:
        m = d.marked_node
        for w in d.neighbors(m):
            key = edge_key(m, w)
            if key not in d.marked_edges:
                allowed.add(EdgeAction(key, EdgeActionKind.MARK_EDGE))
        allowed.add(NodeAction(m, NodeActionKind.STOP_UNFUSE))
        return allowed
    for n in d.nodes():
        for kind in NODE_ACTION_KINDS:
            if kind is NodeActionKind.STOP_UNFUSE:
                continue
            if _NODE_RULES[kind][0](d, n):
                allowed.add(NodeAction(n, kind))
    for e in d.edges():
        for kind in EDGE_ACTION_KINDS:
            if kind is EdgeActionKind.MARK_EDGE:
                continue
            if _EDGE_RULES[kind][0](d, e):
                allowed.add(EdgeAction(e, kind))
    allowed.add(STOP)
    return allowed


def apply_action(d: Diagram, action: Action) -> RewriteOutcome:
    """Apply one action. Raises MaskedActionError if it is not allowed."""
    if not action_allowed(d, action):
        raise MaskedActionError(f"action {action!r} is masked")
    if isinstance(action, StopAction):
        return RewriteOutcome(d.copy(), 0)
    if isinstance(action, NodeAction):
        return _NODE_RULES[action.kind][1](d, action.node)
    return _EDGE_RULES[action.kind][1](d, action.edge)


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise MaskedActionError(message)
