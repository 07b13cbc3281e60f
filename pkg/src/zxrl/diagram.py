"""ZX-diagram graph structure, validation, JSON serialization and isomorphism.

A diagram is a simple undirected graph (no parallel edges, no self-loops).
Nodes are Z/X spiders carrying an exact :class:`~zxrl.angles.Angle`, Hadamard
nodes (always degree 2), and Input/Output boundary nodes (always degree 1)
whose order in the ``inputs``/``outputs`` lists fixes the qubit ordering of
the diagram's matrix.  Unfuse marks (one marked node plus a set of marked
incident edges) are transient optimizer state and are not serialized.
"""

from __future__ import annotations

import json
from enum import Enum
from typing import Iterable, Iterator

from .angles import Angle
from .errors import DiagramError

SERIAL_VERSION = 1


class NodeKind(Enum):
    Z = "Z"
    X = "X"
    H = "H"
    IN = "IN"
    OUT = "OUT"


SPIDER_KINDS = (NodeKind.Z, NodeKind.X)
BOUNDARY_KINDS = (NodeKind.IN, NodeKind.OUT)


def edge_key(u: int, v: int) -> tuple[int, int]:
    """Canonical (min, max) form used for all edge identifiers."""
    return (u, v) if u <= v else (v, u)


class Diagram:
    """Mutable ZX diagram.

    Node ids are arbitrary non-negative ints, never reused within one diagram
    instance.  All enumeration helpers return sorted results so that callers
    iterating over the diagram are deterministic across runs.
    """

    def __init__(self) -> None:
        self._kind: dict[int, NodeKind] = {}
        self._angle: dict[int, Angle] = {}  # spiders only
        self._adj: dict[int, set[int]] = {}
        self._edges: set[tuple[int, int]] = set()
        self.inputs: list[int] = []
        self.outputs: list[int] = []
        self.marked_node: int | None = None
        self.marked_edges: set[tuple[int, int]] = set()
        self.step_budget_remaining: int | None = None
        self._next_id = 0

    # -- construction -----------------------------------------------------

    def add_node(self, kind: NodeKind, angle: Angle | None = None, node_id: int | None = None) -> int:
        if node_id is None:
            node_id = self._next_id
        elif node_id in self._kind:
            raise DiagramError(f"node id {node_id} already present")
        self._next_id = max(self._next_id, node_id + 1)
        if kind in SPIDER_KINDS:
            self._angle[node_id] = angle if angle is not None else Angle.zero()
        elif angle is not None:
            raise DiagramError(f"{kind.value} nodes carry no angle")
        self._kind[node_id] = kind
        self._adj[node_id] = set()
        return node_id

    def add_edge(self, u: int, v: int) -> tuple[int, int]:
        if u == v:
            raise DiagramError(f"self-loop at node {u}")
        if u not in self._kind or v not in self._kind:
            raise DiagramError(f"edge ({u}, {v}) references a missing node")
        key = edge_key(u, v)
        if key in self._edges:
            raise DiagramError(f"parallel edge ({u}, {v})")
        self._edges.add(key)
        self._adj[u].add(v)
        self._adj[v].add(u)
        return key

    def remove_edge(self, u: int, v: int) -> None:
        key = edge_key(u, v)
        if key not in self._edges:
            raise DiagramError(f"no edge ({u}, {v})")
        self._edges.discard(key)
        self.marked_edges.discard(key)
        self._adj[u].discard(v)
        self._adj[v].discard(u)

    def remove_node(self, node_id: int) -> None:
        if node_id not in self._kind:
            raise DiagramError(f"no node {node_id}")
        for w in list(self._adj[node_id]):
            self.remove_edge(node_id, w)
        del self._adj[node_id]
        del self._kind[node_id]
        self._angle.pop(node_id, None)
        if self.marked_node == node_id:
            self.marked_node = None

    # -- queries ----------------------------------------------------------

    def __contains__(self, node_id: int) -> bool:
        return node_id in self._kind

    def nodes(self) -> list[int]:
        return sorted(self._kind)

    def edges(self) -> list[tuple[int, int]]:
        return sorted(self._edges)

    def has_edge(self, u: int, v: int) -> bool:
        return edge_key(u, v) in self._edges

    def kind(self, node_id: int) -> NodeKind:
        return self._kind[node_id]

    def angle(self, node_id: int) -> Angle:
        return self._angle[node_id]

    def set_angle(self, node_id: int, angle: Angle) -> None:
        if self._kind[node_id] not in SPIDER_KINDS:
            raise DiagramError(f"node {node_id} is not a spider")
        self._angle[node_id] = angle

    def is_spider(self, node_id: int) -> bool:
        return self._kind[node_id] in SPIDER_KINDS

    def is_boundary(self, node_id: int) -> bool:
        return self._kind[node_id] in BOUNDARY_KINDS

    def neighbors(self, node_id: int) -> list[int]:
        return sorted(self._adj[node_id])

    def degree(self, node_id: int) -> int:
        return len(self._adj[node_id])

    def spiders(self) -> list[int]:
        return sorted(n for n, k in self._kind.items() if k in SPIDER_KINDS)

    def node_count(self) -> int:
        """Number of spider and Hadamard nodes; boundary nodes excluded.

        This is the quantity the optimizer minimizes and whose step delta is
        the reward.  Boundary nodes are never created or destroyed by rules,
        so deltas agree with total-node deltas.
        """
        return sum(1 for k in self._kind.values() if k not in BOUNDARY_KINDS)

    def total_node_count(self) -> int:
        return len(self._kind)

    def edge_count(self) -> int:
        return len(self._edges)

    def alpha_spider_count(self) -> int:
        """Spiders whose phase involves at least one free symbol."""
        return sum(1 for a in self._angle.values() if not a.is_concrete)

    def free_symbols(self) -> set[int]:
        syms: set[int] = set()
        for a in self._angle.values():
            syms |= a.free_symbols()
        return syms

    def fresh_id(self) -> int:
        """Next id that add_node would assign (without consuming it)."""
        return self._next_id

    # -- copying ----------------------------------------------------------

    def copy(self) -> "Diagram":
        d = Diagram()
        d._kind = dict(self._kind)
        d._angle = dict(self._angle)
        d._adj = {n: set(s) for n, s in self._adj.items()}
        d._edges = set(self._edges)
        d.inputs = list(self.inputs)
        d.outputs = list(self.outputs)
        d.marked_node = self.marked_node
        d.marked_edges = set(self.marked_edges)
        d.step_budget_remaining = self.step_budget_remaining
        d._next_id = self._next_id
        return d

    # -- validation -------------------------------------------------------

    def validate(self) -> None:
        """Raise DiagramError on any structural invariant violation."""
        for n, kind in self._kind.items():
            if kind is NodeKind.H and len(self._adj[n]) != 2:
                raise DiagramError(f"Hadamard node {n} has degree {len(self._adj[n])}, expected 2")
            if kind in BOUNDARY_KINDS and len(self._adj[n]) != 1:
                raise DiagramError(f"boundary node {n} has degree {len(self._adj[n])}, expected 1")
            if kind in SPIDER_KINDS and n not in self._angle:
                raise DiagramError(f"spider {n} has no angle")
        for seq, kind, name in ((self.inputs, NodeKind.IN, "inputs"), (self.outputs, NodeKind.OUT, "outputs")):
            if len(set(seq)) != len(seq):
                raise DiagramError(f"duplicate ids in {name}")
            for n in seq:
                if self._kind.get(n) is not kind:
                    raise DiagramError(f"{name} entry {n} is not a {kind.value} node")
        n_in = sum(1 for k in self._kind.values() if k is NodeKind.IN)
        n_out = sum(1 for k in self._kind.values() if k is NodeKind.OUT)
        if n_in != len(self.inputs) or n_out != len(self.outputs):
            raise DiagramError("boundary nodes not listed in inputs/outputs")
        for (u, v) in self._edges:
            if u == v or u not in self._kind or v not in self._kind:
                raise DiagramError(f"bad edge ({u}, {v})")
        if self.marked_node is not None and self.marked_node not in self._kind:
            raise DiagramError("marked node missing")
        for key in self.marked_edges:
            if key not in self._edges:
                raise DiagramError(f"marked edge {key} missing")

    def __repr__(self) -> str:
        return (
            f"Diagram(nodes={self.total_node_count()}, edges={self.edge_count()}, "
            f"io={len(self.inputs)}/{len(self.outputs)})"
        )


# -- serialization ---------------------------------------------------------


def to_json_dict(d: Diagram) -> dict:
    nodes = []
    for n in d.nodes():
        entry: dict = {"id": n, "kind": d.kind(n).value}
        if d.is_spider(n):
            a = d.angle(n)
            entry["quarter_turns"] = a.quarter_turns
            if not a.is_concrete:
                entry["symbols"] = {str(s): c for s, c in sorted(a.symbols.items())}
        nodes.append(entry)
    return {
        "version": SERIAL_VERSION,
        "nodes": nodes,
        "edges": [list(e) for e in d.edges()],
        "inputs": list(d.inputs),
        "outputs": list(d.outputs),
    }


def from_json_dict(obj: dict) -> Diagram:
    if not isinstance(obj, dict):
        raise DiagramError("diagram document must be a JSON object")
    if obj.get("version") != SERIAL_VERSION:
        raise DiagramError(f"unsupported diagram version {obj.get('version')!r}")
    d = Diagram()
    kinds = {k.value: k for k in NodeKind}
    for i, entry in enumerate(obj.get("nodes", [])):
        try:
            node_id = int(entry["id"])
            kind = kinds[entry["kind"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise DiagramError(f"nodes[{i}]: missing or invalid id/kind") from exc
        angle = None
        if kind in SPIDER_KINDS:
            try:
                symbols = {int(s): int(c) for s, c in entry.get("symbols", {}).items()}
                angle = Angle(int(entry.get("quarter_turns", 0)), symbols)
            except (TypeError, ValueError) as exc:
                raise DiagramError(f"nodes[{i}]: invalid angle fields") from exc
        elif "quarter_turns" in entry or "symbols" in entry:
            raise DiagramError(f"nodes[{i}]: {kind.value} nodes carry no angle")
        d.add_node(kind, angle, node_id=node_id)
    for i, pair in enumerate(obj.get("edges", [])):
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise DiagramError(f"edges[{i}]: expected a pair")
        try:
            d.add_edge(int(pair[0]), int(pair[1]))
        except DiagramError as exc:
            raise DiagramError(f"edges[{i}]: {exc}") from exc
    for name in ("inputs", "outputs"):
        seq = obj.get(name, [])
        if not isinstance(seq, list):
            raise DiagramError(f"{name} must be a list")
        getattr(d, name).extend(int(x) for x in seq)
    try:
        d.validate()
    except DiagramError as exc:
        raise DiagramError(f"invalid diagram: {exc}") from exc
    return d


def serialize(d: Diagram) -> str:
    """Deterministic single-line JSON for a diagram (sorted nodes and edges)."""
    return json.dumps(to_json_dict(d), separators=(",", ":"))


def deserialize(text: str) -> Diagram:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DiagramError(f"JSON parse error at line {exc.lineno} col {exc.colno}: {exc.msg}") from exc
    return from_json_dict(obj)


def dump_jsonl(diagrams: Iterable[Diagram], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in diagrams:
            fh.write(serialize(d) + "\n")


def load_jsonl(path: str) -> Iterator[Diagram]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield deserialize(line)
            except DiagramError as exc:
                raise DiagramError(f"{path}:{lineno}: {exc}") from exc


# -- isomorphism -----------------------------------------------------------


def isomorphic(a: Diagram, b: Diagram) -> bool:
    """Structural equality up to node relabeling.

    Kinds, exact angles, unfuse marks and the positions of boundary nodes in
    the input/output order must all be preserved.  Free symbols are matched
    by identity (no symbol renaming).
    """
    import networkx as nx

    def build(d: Diagram) -> "nx.Graph":
        g = nx.Graph()
        for n in d.nodes():
            io = None
            if n in d.inputs:
                io = ("in", d.inputs.index(n))
            elif n in d.outputs:
                io = ("out", d.outputs.index(n))
            g.add_node(
                n,
                kind=d.kind(n).value,
                angle=d.angle(n) if d.is_spider(n) else None,
                io=io,
                marked=(n == d.marked_node),
            )
        for (u, v) in d.edges():
            g.add_edge(u, v, marked=(u, v) in d.marked_edges)
        return g

    ga, gb = build(a), build(b)
    if ga.number_of_nodes() != gb.number_of_nodes() or ga.number_of_edges() != gb.number_of_edges():
        return False
    node_match = nx.algorithms.isomorphism.categorical_node_match(
        ["kind", "angle", "io", "marked"], [None, None, None, False]
    )
    edge_match = nx.algorithms.isomorphism.categorical_edge_match("marked", False)
    return nx.is_isomorphic(ga, gb, node_match=node_match, edge_match=edge_match)
