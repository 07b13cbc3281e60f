"""RL environment: observation encoding, flat action indexing, stepping.

The observation encodes the diagram itself (per-node and per-edge feature
vectors plus the edge list), a 17-component global summary vector, the legal
action mask over a flat action index space, and the stop counter.  The flat
space enumerates six candidate rewrites per node, six per edge, and one
trailing Stop slot: node-major by sorted node id, then edge-major by sorted
edge key, each block ordered by the action-kind enums.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .angles import Angle
from .diagram import Diagram, NodeKind, edge_key
from .errors import ZXError
from . import rules
from .rules import (
    Action,
    EdgeAction,
    EdgeActionKind,
    NodeAction,
    NodeActionKind,
    STOP,
    StopAction,
)

NODE_KIND_ORDER = (NodeKind.Z, NodeKind.X, NodeKind.H, NodeKind.IN, NodeKind.OUT)
N_NODE_FEATURES = 12  # 5 kind one-hot + 6 angle-class one-hot + mark flag
N_EDGE_FEATURES = 1  # mark flag
N_GLOBALS = 17
ACTIONS_PER_NODE = len(NodeActionKind)
ACTIONS_PER_EDGE = len(EdgeActionKind)

DEFAULT_STEP_BUDGET = 200
STOP_COUNTER_CAP = 20


def angle_class(d: Diagram, node: int) -> int:
    """0..3 for concrete quarter turns, 4 for symbolic, 5 for angle-free."""
    if not d.is_spider(node):
        return 5
    a: Angle = d.angle(node)
    if not a.is_concrete:
        return 4
    return a.quarter_turns


def action_space_size(d: Diagram) -> int:
    return ACTIONS_PER_NODE * d.total_node_count() + ACTIONS_PER_EDGE * d.edge_count() + 1


def flat_action_index(d: Diagram, action: Action) -> int:
    """Position of an action in the flat index space of this diagram."""
    nodes = d.nodes()
    if isinstance(action, StopAction):
        return ACTIONS_PER_NODE * len(nodes) + ACTIONS_PER_EDGE * d.edge_count()
    if isinstance(action, NodeAction):
        try:
            rank = nodes.index(action.node)
        except ValueError:
            raise ZXError(f"node {action.node} not in diagram") from None
        return rank * ACTIONS_PER_NODE + action.kind.value
    edges = d.edges()
    key = edge_key(*action.edge)
    try:
        rank = edges.index(key)
    except ValueError:
        raise ZXError(f"edge {key} not in diagram") from None
    return ACTIONS_PER_NODE * len(nodes) + rank * ACTIONS_PER_EDGE + action.kind.value


def action_from_index(d: Diagram, index: int) -> Action:
    """Inverse of :func:`flat_action_index`; rejects out-of-range indices."""
    n_nodes = d.total_node_count()
    n_edges = d.edge_count()
    size = ACTIONS_PER_NODE * n_nodes + ACTIONS_PER_EDGE * n_edges + 1
    if not 0 <= index < size:
        raise ZXError(f"action index {index} outside [0, {size})")
    if index == size - 1:
        return STOP
    if index < ACTIONS_PER_NODE * n_nodes:
        rank, kind = divmod(index, ACTIONS_PER_NODE)
        return NodeAction(d.nodes()[rank], NodeActionKind(kind))
    index -= ACTIONS_PER_NODE * n_nodes
    rank, kind = divmod(index, ACTIONS_PER_EDGE)
    return EdgeAction(d.edges()[rank], EdgeActionKind(kind))


@dataclass
class Observation:
    node_ids: list[int]
    node_features: np.ndarray  # (n, 12)
    edge_list: list[tuple[int, int]]
    edge_features: np.ndarray  # (m, 1)
    globals_c: np.ndarray  # (17,)
    mask: np.ndarray  # (6n + 6m + 1,) bool
    stop_counter: int

    def n_actions(self) -> int:
        return len(self.mask)


# Global-vector slots for the allowed-action counts, in storage order.
_C_NODE_RULE_SLOTS = ((NodeActionKind.HADAMARD_FUSE, 8), (NodeActionKind.EULER, 9))
_C_EDGE_RULE_SLOTS = (
    (EdgeActionKind.FUSE, 10),
    (EdgeActionKind.PI, 11),
    (EdgeActionKind.COPY, 12),
    (EdgeActionKind.BIALGEBRA_RIGHT, 13),
    (EdgeActionKind.BIALGEBRA_LEFT, 14),
)


def observe(d: Diagram, steps_left: int) -> Observation:
    """Encode a diagram and remaining budget; pure, no environment needed."""
    nodes = d.nodes()
    edges = d.edges()
    stop_counter = min(STOP_COUNTER_CAP, max(0, steps_left))

    nf = np.zeros((len(nodes), N_NODE_FEATURES), dtype=np.float64)
    for row, n in enumerate(nodes):
        nf[row, NODE_KIND_ORDER.index(d.kind(n))] = 1.0
        nf[row, 5 + angle_class(d, n)] = 1.0
        if n == d.marked_node:
            nf[row, 11] = 1.0

    ef = np.zeros((len(edges), N_EDGE_FEATURES), dtype=np.float64)
    for row, e in enumerate(edges):
        if e in d.marked_edges:
            ef[row, 0] = 1.0

    allowed = rules.action_mask(d)
    mask = np.zeros(action_space_size(d), dtype=bool)
    for action in allowed:
        mask[flat_action_index(d, action)] = True

    c = np.zeros(N_GLOBALS, dtype=np.float64)
    c[0] = float(len(nodes))
    c[1] = float(len(edges))
    spiders = d.spiders()
    n_spiders = len(spiders)
    if n_spiders:
        kinds = [d.kind(n) for n in spiders]
        classes = [angle_class(d, n) for n in spiders]
        c[2] = kinds.count(NodeKind.Z) / n_spiders
        c[3] = kinds.count(NodeKind.X) / n_spiders
        c[4] = sum(1 for n in nodes if d.kind(n) is NodeKind.H) / n_spiders
        c[5] = classes.count(0) / n_spiders
        c[6] = classes.count(2) / n_spiders
        c[7] = classes.count(4) / n_spiders
        node_kind_counts = {kind: 0 for kind, _ in _C_NODE_RULE_SLOTS}
        for action in allowed:
            if isinstance(action, NodeAction) and action.kind in node_kind_counts:
                node_kind_counts[action.kind] += 1
        for kind, slot in _C_NODE_RULE_SLOTS:
            c[slot] = node_kind_counts[kind] / n_spiders
    if edges:
        edge_kind_counts = {kind: 0 for kind, _ in _C_EDGE_RULE_SLOTS}
        for action in allowed:
            if isinstance(action, EdgeAction) and action.kind in edge_kind_counts:
                edge_kind_counts[action.kind] += 1
        for kind, slot in _C_EDGE_RULE_SLOTS:
            c[slot] = edge_kind_counts[kind] / len(edges)
    c[15] = float(stop_counter)
    c[16] = 1.0 if d.marked_node is not None else 0.0

    return Observation(
        node_ids=nodes,
        node_features=nf,
        edge_list=edges,
        edge_features=ef,
        globals_c=c,
        mask=mask,
        stop_counter=stop_counter,
    )


@dataclass
class StepResult:
    observation: Observation
    reward: int
    done: bool
    truncated: bool


class ZXEnv:
    """Single-trajectory environment over one diagram at a time.

    ``reset`` accepts an explicit diagram or draws one from the sampler
    callable the environment was built with.  ``step`` takes a flat action
    index; stepping a masked index raises, since the policy layer is
    responsible for never sampling one.
    """

    def __init__(
        self,
        sample_fn: Callable[[np.random.Generator], Diagram] | None = None,
        step_budget: int = DEFAULT_STEP_BUDGET,
    ):
        if step_budget <= 0:
            raise ValueError("step_budget must be positive")
        self._sample_fn = sample_fn
        self.step_budget = step_budget
        self.diagram: Diagram | None = None
        self.steps_left = 0
        self.done = True
        self.initial_node_count = 0

    def reset(self, diagram: Diagram | None = None, rng: np.random.Generator | None = None) -> Observation:
        if diagram is None:
            if self._sample_fn is None:
                raise ZXError("reset needs a diagram or a sampler")
            diagram = self._sample_fn(rng if rng is not None else np.random.default_rng())
        self.diagram = diagram.copy()
        self.diagram.marked_node = None
        self.diagram.marked_edges = set()
        self.steps_left = self.step_budget
        self.done = False
        self.initial_node_count = self.diagram.node_count()
        return observe(self.diagram, self.steps_left)

    def observation(self) -> Observation:
        assert self.diagram is not None
        return observe(self.diagram, self.steps_left)

    def step(self, index: int) -> StepResult:
        if self.done or self.diagram is None:
            raise ZXError("step called on a finished environment; reset first")
        action = action_from_index(self.diagram, index)
        outcome = rules.apply_action(self.diagram, action)
        if isinstance(action, StopAction):
            self.done = True
            return StepResult(observe(self.diagram, self.steps_left), 0, True, False)
        self.diagram = outcome.diagram
        self.steps_left -= 1
        truncated = self.steps_left <= 0
        self.done = truncated
        return StepResult(
            observe(self.diagram, self.steps_left),
            outcome.reward,
            self.done,
            truncated,
        )
