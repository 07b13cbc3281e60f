"""Evaluation protocol, policy-locality probe, and the copy scenario.

Strategies share the RunRecord bookkeeping from `baselines` so greedy,
annealing, random, and checkpointed policies can all be compared by the same
fold.  Per-diagram randomness is keyed by (seed, index), which makes the
summary independent of worker count and evaluation order.
"""

import math
import multiprocessing
import time
from dataclasses import dataclass
from functools import partial
from typing import Callable

import numpy as np

from . import rules
from .angles import Angle
from .baselines import AnnealConfig, RunRecord, _BestTracker
from .baselines import greedy as greedy_run
from .baselines import simulated_annealing
from .diagram import Diagram, NodeKind, edge_key
from .env import DEFAULT_STEP_BUDGET, action_from_index, flat_action_index, observe
from .errors import ZXError
from .nn.checkpoint import CheckpointError, load_checkpoint
from .nn.graphnet import NetConfig, PolicyNet, pack_observations
from .ppo import sample_actions
from .rules import Action, EdgeAction, EdgeActionKind, NodeAction, StopAction

__all__ = [
    "Strategy",
    "action_anchor",
    "copy_action_probability",
    "copy_fuse_cumulative",
    "copy_scenario",
    "evaluate",
    "locality_epsilon",
    "neighborhood",
    "policy_from_checkpoint",
    "policy_strategy",
    "random_strategy",
    "run_policy",
    "run_random",
    "sub_diagram",
    "anneal_strategy",
    "greedy_strategy",
]


# -- strategies ----------------------------------------------------------------


@dataclass(frozen=True)
class Strategy:
    """A named optimization procedure: (diagram, rng, step budget) -> record."""

    name: str
    run: Callable[[Diagram, np.random.Generator, int], RunRecord]


def _greedy_run(d: Diagram, rng, max_steps: int) -> RunRecord:
    return greedy_run(d, rng, max_steps=max_steps)


def greedy_strategy() -> Strategy:
    return Strategy("greedy", _greedy_run)


def _anneal_run(cfg: AnnealConfig, d: Diagram, rng, max_steps: int) -> RunRecord:
    # Annealing carries its own schedule-length budget; the evaluation budget
    # does not apply.
    return simulated_annealing(d, cfg, rng)


def anneal_strategy(cfg: AnnealConfig) -> Strategy:
    return Strategy("anneal", partial(_anneal_run, cfg))


def run_random(d: Diagram, rng, max_steps: int = DEFAULT_STEP_BUDGET) -> RunRecord:
    """Uniform choice over the full action mask, Stop included."""
    rng = np.random.default_rng(rng)
    start = time.perf_counter()
    cur = d.copy()
    track = _BestTracker(cur)
    actions: list[Action] = []
    rewards: list[int] = []
    for _ in range(max_steps):
        mask = sorted(rules.action_mask(cur), key=lambda a: flat_action_index(cur, a))
        if not mask:
            break
        action = mask[rng.integers(len(mask))]
        out = rules.apply_action(cur, action)
        actions.append(action)
        rewards.append(out.reward)
        cur = out.diagram
        track.update(cur)
        if isinstance(action, StopAction):
            break
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


def random_strategy() -> Strategy:
    return Strategy("random", run_random)


def run_policy(
    policy: PolicyNet,
    d: Diagram,
    rng,
    max_steps: int = DEFAULT_STEP_BUDGET,
    sample: bool = True,
) -> RunRecord:
    """Roll the policy out on one diagram, sampling (or argmaxing) each step."""
    rng = np.random.default_rng(rng)
    start = time.perf_counter()
    cur = d.copy()
    track = _BestTracker(cur)
    actions: list[Action] = []
    rewards: list[int] = []
    steps_left = max_steps
    while steps_left > 0:
        obs = observe(cur, steps_left)
        batch = pack_observations([obs])
        out = policy.forward(batch)
        if sample:
            flat = int(sample_actions(out.probs(), batch, rng)[0])
        else:
            flat = int(np.argmax(out.masked_logits.value[:, 0]))
        action = action_from_index(cur, flat)
        res = rules.apply_action(cur, action)
        actions.append(action)
        rewards.append(res.reward)
        cur = res.diagram
        track.update(cur)
        steps_left -= 1
        if isinstance(action, StopAction):
            break
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


def policy_from_checkpoint(path) -> tuple[PolicyNet, dict]:
    """Rebuild a policy network from a training checkpoint."""
    tensors, counters = load_checkpoint(path)
    for key in ("width", "mp_layers"):
        if key not in counters:
            raise CheckpointError(f"checkpoint lacks the {key} counter")
    cfg = NetConfig(width=counters["width"], mp_layers=counters["mp_layers"])
    policy = PolicyNet(cfg)
    for name, t in policy.params().items():
        if name not in tensors:
            raise CheckpointError(f"checkpoint lacks parameter {name}")
        if tensors[name].shape != t.value.shape:
            raise CheckpointError(
                f"parameter {name} has shape {tensors[name].shape}, "
                f"expected {t.value.shape}"
            )
        t.value = tensors[name]
    return policy, counters


def _policy_run(policy, sample, d, rng, max_steps):
    return run_policy(policy, d, rng, max_steps, sample=sample)


def policy_strategy(policy: PolicyNet, name: str = "policy", sample: bool = True) -> Strategy:
    return Strategy(name, partial(_policy_run, policy, sample))


# -- evaluation fold -----------------------------------------------------------


def _run_one(strategy: Strategy, index: int, d: Diagram, max_steps: int, seed: int):
    rng = np.random.default_rng((seed, index))
    return strategy.run(d, rng, max_steps)


def evaluate(
    strategy: Strategy,
    corpus: list[Diagram],
    max_steps: int = DEFAULT_STEP_BUDGET,
    corpus_seed: int | None = None,
    seed: int = 0,
    workers: int = 1,
) -> dict:
    """Run a strategy over a corpus and aggregate Table-style metrics."""
    tasks = [(strategy, k, d, max_steps, seed) for k, d in enumerate(corpus)]
    if workers > 1:
        with multiprocessing.get_context("fork").Pool(workers) as pool:
            records = pool.starmap(_run_one, tasks)
    else:
        records = [_run_one(*t) for t in tasks]
    return {
        "strategy": strategy.name,
        "corpus_seed": corpus_seed,
        "mean_best_nodes": float(np.mean([r.best_nodes for r in records])),
        "mean_best_alpha": float(np.mean([r.best_alpha_spiders for r in records])),
        "mean_cumulative_reward": float(np.mean([sum(r.rewards) for r in records])),
        "mean_time_s": float(np.mean([r.wall_time for r in records])),
        "per_diagram": [r.to_json() for r in records],
    }


# -- locality probe ------------------------------------------------------------


def action_anchor(action: Action) -> tuple[int, ...]:
    if isinstance(action, NodeAction):
        return (action.node,)
    if isinstance(action, EdgeAction):
        return tuple(action.edge)
    raise ZXError("the stop action has no locality anchor")


def neighborhood(d: Diagram, anchor: tuple[int, ...], layer: int) -> set[int]:
    """Node ids within ``layer`` hops of the anchor set."""
    seen = set(anchor)
    frontier = set(anchor)
    for _ in range(layer):
        frontier = {
            m for n in frontier for m in d.neighbors(n) if m not in seen
        }
        if not frontier:
            break
        seen |= frontier
    return seen


def sub_diagram(d: Diagram, kept: set[int]) -> Diagram:
    """Induced sub-diagram on ``kept``; edges crossing the cut are dropped.

    Node ids are preserved so actions keep their meaning.  The result is
    deliberately not validated: a Hadamard at the cut may lose a leg, which is
    fine for feature extraction but would fail the structural checks.
    """
    sub = Diagram()
    for n in sorted(kept):
        angle = d.angle(n) if d.is_spider(n) else None
        sub.add_node(d.kind(n), angle, node_id=n)
    for u, v in d.edges():
        if u in kept and v in kept:
            sub.add_edge(u, v)
    sub.inputs = [n for n in d.inputs if n in kept]
    sub.outputs = [n for n in d.outputs if n in kept]
    if d.marked_node in kept:
        sub.marked_node = d.marked_node
        sub.marked_edges = {e for e in d.marked_edges if e[0] in kept and e[1] in kept}
    return sub


def _action_logit(policy: PolicyNet, d: Diagram, action: Action, steps_left: int) -> float:
    obs = observe(d, steps_left)
    batch = pack_observations([obs])
    out = policy.forward(batch)
    flat = flat_action_index(d, action)
    return float(out.logits.value[batch.long_index(0, flat), 0])


def locality_epsilon(
    policy: PolicyNet,
    d: Diagram,
    action: Action,
    layer: int,
    steps_left: int = DEFAULT_STEP_BUDGET,
) -> float:
    """Relative change of the action's unnormalized probability exp(logit)
    when the policy only sees the ``layer``-hop ball around the action."""
    anchor = action_anchor(action)
    for n in anchor:
        if n not in d:
            raise ZXError(f"action anchor {n} is not in the diagram")
    complete = _action_logit(policy, d, action, steps_left)
    sub = sub_diagram(d, neighborhood(d, anchor, layer))
    local = _action_logit(policy, sub, action, steps_left)
    if local == complete:
        return 0.0
    return max(math.exp(local - complete), math.exp(complete - local)) - 1.0


# -- copy scenario -------------------------------------------------------------


def copy_scenario(n_out: int, n_extra: int) -> tuple[Diagram, tuple[int, int]]:
    """State-copy probe: a phase-free Z leg feeding an X hub with n_out output
    legs, the first n_extra of which carry a symbolic-phase spider.  Returns
    the diagram and the Z-X edge the copy acts on."""
    if n_out < 1:
        raise ZXError("copy scenario needs at least one output leg")
    if not 0 <= n_extra <= n_out:
        raise ZXError("n_extra must lie between 0 and n_out")
    d = Diagram()
    pusher = d.add_node(NodeKind.Z, Angle.zero())
    hub = d.add_node(NodeKind.X, Angle.zero())
    d.add_edge(pusher, hub)
    outs = []
    for k in range(n_out):
        o = d.add_node(NodeKind.OUT)
        if k < n_extra:
            s = d.add_node(NodeKind.Z, Angle.symbol(k))
            d.add_edge(hub, s)
            d.add_edge(s, o)
        else:
            d.add_edge(hub, o)
        outs.append(o)
    d.outputs = outs
    d.validate()
    return d, edge_key(pusher, hub)


def copy_fuse_cumulative(n_out: int, n_extra: int) -> int:
    """Total reward of Copy on the designated edge followed by all fuses."""
    d, edge = copy_scenario(n_out, n_extra)
    out = rules.apply_action(d, EdgeAction(edge, EdgeActionKind.COPY))
    total = out.reward
    cur = out.diagram
    while True:
        fuses = [
            a
            for a in rules.action_mask(cur)
            if isinstance(a, EdgeAction) and a.kind is EdgeActionKind.FUSE
        ]
        if not fuses:
            return total
        res = rules.apply_action(cur, min(fuses, key=lambda a: a.edge))
        total += res.reward
        cur = res.diagram


def copy_action_probability(
    policy: PolicyNet,
    n_out: int,
    n_extra: int,
    steps_left: int = DEFAULT_STEP_BUDGET,
) -> float:
    """Probability the policy assigns to Copy on the scenario's marked edge."""
    d, edge = copy_scenario(n_out, n_extra)
    obs = observe(d, steps_left)
    batch = pack_observations([obs])
    out = policy.forward(batch)
    flat = flat_action_index(d, EdgeAction(edge, EdgeActionKind.COPY))
    return float(out.probs()[batch.long_index(0, flat), 0])
