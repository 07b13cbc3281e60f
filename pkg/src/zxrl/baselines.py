"""Reference optimization strategies: greedy search and simulated annealing.

Both operate directly on diagrams through the rewrite-rule mask, without the
RL environment wrapper, and report the best (minimum) node count seen during
the run rather than the final one.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import rules
from .diagram import Diagram
from .env import flat_action_index
from .rules import Action, NodeAction, NodeActionKind, StopAction

__all__ = [
    "AnnealConfig",
    "RunRecord",
    "acceptance_probability",
    "alpha_spider_count",
    "greedy",
    "simulated_annealing",
    "temperature",
]


def alpha_spider_count(d: Diagram) -> int:
    """Number of spiders whose phase still carries a free symbol."""
    return sum(1 for n in d.spiders() if not d.angle(n).is_concrete)


@dataclass
class RunRecord:
    """Outcome of one optimization run on a single diagram.

    ``best_nodes`` and ``best_alpha_spiders`` are independent minima over all
    visited states (including the initial one).  ``actions`` and ``rewards``
    hold the applied trajectory so runs can be replayed in tests.
    """

    initial_nodes: int
    best_nodes: int
    best_alpha_spiders: int
    steps: int
    wall_time: float
    final_nodes: int
    actions: list[Action] = field(default_factory=list)
    rewards: list[int] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "initial_nodes": self.initial_nodes,
            "best_nodes": self.best_nodes,
            "best_alpha_spiders": self.best_alpha_spiders,
            "steps": self.steps,
            "wall_time": self.wall_time,
        }


class _BestTracker:
    def __init__(self, d: Diagram):
        self.nodes = d.node_count()
        self.alpha = alpha_spider_count(d)

    def update(self, d: Diagram) -> None:
        self.nodes = min(self.nodes, d.node_count())
        self.alpha = min(self.alpha, alpha_spider_count(d))


def candidate_actions(d: Diagram) -> list[Action]:
    """Unmasked rewrite actions in stable (flat index) order, Stop excluded."""
    acts = [a for a in rules.action_mask(d) if not isinstance(a, StopAction)]
    acts.sort(key=lambda a: flat_action_index(d, a))
    return acts


def _is_kind(action: Action, kind: NodeActionKind) -> bool:
    return isinstance(action, NodeAction) and action.kind is kind


def greedy(d: Diagram, rng=None, max_steps: int = 200) -> RunRecord:
    """Repeatedly apply the rewrite with the largest immediate reward.

    Every unmasked action is trial-applied to score it; ties are broken
    uniformly at random.  StartUnfuse commits to a later split costing a node,
    so it is scored at its worst-case composite reward of -1, which keeps the
    strategy out of unfuse mode entirely.  The run ends when every candidate
    scores negative or the step budget is exhausted.
    """
    rng = np.random.default_rng(rng)
    start = time.perf_counter()
    cur = d.copy()
    track = _BestTracker(cur)
    actions: list[Action] = []
    rewards: list[int] = []
    while len(actions) < max_steps:
        scored: list[tuple[int, Action, Diagram | None]] = []
        for action in candidate_actions(cur):
            if _is_kind(action, NodeActionKind.START_UNFUSE):
                scored.append((-1, action, None))
            else:
                out = rules.apply_action(cur, action)
                scored.append((out.reward, action, out.diagram))
        if not scored:
            break
        top = max(r for r, _, _ in scored)
        if top < 0:
            break
        picks = [entry for entry in scored if entry[0] == top]
        reward, action, result = picks[rng.integers(len(picks))]
        cur = result
        actions.append(action)
        rewards.append(reward)
        track.update(cur)
    return RunRecord(
        initial_nodes=d.node_count(),
        best_nodes=track.nodes,
        best_alpha_spiders=track.alpha,
        steps=len(actions),
        wall_time=time.perf_counter() - start,
        final_nodes=cur.node_count(),
        actions=actions,
        rewards=rewards,
    )


@dataclass(frozen=True)
class AnnealConfig:
    t_start: float = 0.5
    c_ann: float = 1e-4
    max_steps: int = 20000
    seed: int | None = None

    def __post_init__(self):
        if self.t_start <= 0:
            raise ValueError("t_start must be positive")
        if self.c_ann <= 0:
            raise ValueError("c_ann must be positive")
        if self.max_steps < 0:
            raise ValueError("max_steps must be non-negative")


def temperature(cfg: AnnealConfig, step: int) -> float:
    return cfg.t_start * math.exp(-cfg.c_ann * step)


def acceptance_probability(reward: float, temp: float) -> float:
    """Metropolis rule: non-negative moves are free, negative ones pay exp(r/T)."""
    if reward >= 0:
        return 1.0
    return math.exp(reward / temp)


def _acceptance_reward(action: Action, true_reward: int) -> int:
    # The split itself is charged when unfuse mode is entered, not when it is
    # completed; otherwise annealing would buy StartUnfuse for free and then
    # face a forced unpaid -1, biasing it into pointless splits.
    if _is_kind(action, NodeActionKind.START_UNFUSE):
        return -1
    if _is_kind(action, NodeActionKind.STOP_UNFUSE):
        return 0
    return true_reward


def simulated_annealing(d: Diagram, cfg: AnnealConfig, rng=None, on_proposal=None) -> RunRecord:
    """Metropolis annealing over uniformly proposed unmasked rewrites.

    A proposal with true reward r is applied when r >= 0 and otherwise with
    probability exp(r/T) under the exponential cooling schedule.  Unfuse
    actions swap their charged rewards (StartUnfuse -1, StopUnfuse 0) for the
    acceptance test only; recorded rewards and node accounting stay true.

    on_proposal, if given, is called as on_proposal(step, charged_reward,
    temperature, accepted) for every proposal, letting callers audit the
    accept/reject stream without touching the run itself.
    """
    rng = np.random.default_rng(cfg.seed if rng is None else rng)
    start = time.perf_counter()
    cur = d.copy()
    track = _BestTracker(cur)
    actions: list[Action] = []
    rewards: list[int] = []
    steps = 0
    for step in range(cfg.max_steps):
        cands = candidate_actions(cur)
        if not cands:
            break
        steps += 1
        action = cands[rng.integers(len(cands))]
        out = rules.apply_action(cur, action)
        charged = _acceptance_reward(action, out.reward)
        temp = temperature(cfg, step)
        accepted = rng.random() < acceptance_probability(charged, temp)
        if on_proposal is not None:
            on_proposal(step, charged, temp, accepted)
        if not accepted:
            continue
        cur = out.diagram
        actions.append(action)
        rewards.append(out.reward)
        track.update(cur)
    return RunRecord(
        initial_nodes=d.node_count(),
        best_nodes=track.nodes,
        best_alpha_spiders=track.alpha,
        steps=steps,
        wall_time=time.perf_counter() - start,
        final_nodes=cur.node_count(),
        actions=actions,
        rewards=rewards,
    )
