"""Random ZX-diagram generation for training and evaluation.

A diagram is built from a spider pool with random colors and phases, a
capped number of Hadamard nodes, Erdos-Renyi style edges calibrated to a
target mean degree, and boundary wires attached to random spiders; the
result is then reduced with :func:`~zxrl.rules.auto_simplify`.  Phases are
drawn from a per-diagram categorical distribution over {0, pi/2, pi, free
symbol}, with the non-zero classes downweighted.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .angles import Angle
from .diagram import Diagram, NodeKind
from .errors import SamplerError
from .rules import auto_simplify

MAX_RESAMPLES = 64


@dataclass(frozen=True)
class SamplerConfig:
    n_init_range: tuple[int, int] = (10, 15)
    io_range: tuple[int, int] = (1, 3)
    hadamard_fraction_cap: float = 0.2
    angle_downweight: float = 0.4
    n_neigh_range: tuple[int, int] = (2, 4)
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("n_init_range", "io_range", "n_neigh_range"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise ValueError(f"{name} is empty: ({lo}, {hi})")
        if not 0.0 <= self.hadamard_fraction_cap <= 1.0:
            raise ValueError("hadamard_fraction_cap must lie in [0, 1]")
        if self.angle_downweight < 0.0:
            raise ValueError("angle_downweight must be nonnegative")

    def evaluation_scale(self) -> "SamplerConfig":
        """Same distribution at the 100-150 initial-spider size."""
        return replace(self, n_init_range=(100, 150))


def _uniform_int(rng: np.random.Generator, lo_hi: tuple[int, int]) -> int:
    lo, hi = lo_hi
    return int(rng.integers(lo, hi + 1))


def raw_sample(cfg: SamplerConfig, rng: np.random.Generator) -> tuple[Diagram, dict]:
    """One draw before simplification, plus the quantities tests pin down.

    The returned stats hold the drawn spider count, the drawn target degree,
    and the spider degrees at the moment the random edges were placed (before
    Hadamard repair and boundary attachment).
    """
    n_in = _uniform_int(rng, cfg.io_range)
    n_out = _uniform_int(rng, cfg.io_range)
    n_init = _uniform_int(rng, cfg.n_init_range)
    n_h = int(rng.integers(0, int(cfg.hadamard_fraction_cap * n_init) + 1))

    # Per-diagram phase distribution over (0, pi, pi/2, symbolic).
    weights = rng.uniform(0.0, 1.0, size=4)
    weights[1:] *= cfg.angle_downweight
    weights /= weights.sum()
    phase_qt = (0, 2, 1)

    d = Diagram()
    next_symbol = 0
    spiders = []
    for _ in range(n_init):
        kind = NodeKind.Z if rng.random() < 0.5 else NodeKind.X
        cls = int(rng.choice(4, p=weights))
        if cls < 3:
            angle = Angle(phase_qt[cls])
        else:
            angle = Angle.symbol(next_symbol)
            next_symbol += 1
        spiders.append(d.add_node(kind, angle))
    hadamards = [d.add_node(NodeKind.H) for _ in range(n_h)]

    pool = spiders + hadamards
    n_neigh = _uniform_int(rng, cfg.n_neigh_range)
    p_edge = min(1.0, n_neigh / max(1, len(pool) - 1))
    for i in range(len(pool)):
        for j in range(i + 1, len(pool)):
            if rng.random() < p_edge:
                d.add_edge(pool[i], pool[j])
    raw_degrees = [d.degree(n) for n in spiders]

    # Hadamard nodes must have degree exactly two: trim extra edges keeping
    # the two lowest-id neighbors, delete under-connected ones.  A deletion
    # can orphan another Hadamard, so repeat until stable.
    changed = True
    while changed:
        changed = False
        for h in list(hadamards):
            if h not in d:
                hadamards.remove(h)
                continue
            nbrs = d.neighbors(h)
            if len(nbrs) < 2:
                d.remove_node(h)
                hadamards.remove(h)
                changed = True
            elif len(nbrs) > 2:
                for w in nbrs[2:]:
                    d.remove_edge(h, w)
                changed = True

    for _ in range(n_in):
        b = d.add_node(NodeKind.IN)
        d.add_edge(b, spiders[int(rng.integers(0, len(spiders)))])
        d.inputs.append(b)
    for _ in range(n_out):
        b = d.add_node(NodeKind.OUT)
        d.add_edge(b, spiders[int(rng.integers(0, len(spiders)))])
        d.outputs.append(b)

    stats = {"n_init": n_init, "n_neigh": n_neigh, "raw_degrees": raw_degrees}
    return d, stats


def sample_diagram(cfg: SamplerConfig, rng: np.random.Generator) -> Diagram:
    """Draw one simplified, non-empty diagram (bounded retries)."""
    for _ in range(MAX_RESAMPLES):
        d, _ = raw_sample(cfg, rng)
        d = auto_simplify(d)
        if d.spiders():
            d.validate()
            return d
    raise SamplerError(f"no non-empty diagram after {MAX_RESAMPLES} draws")


def sample_corpus(cfg: SamplerConfig, count: int) -> list[Diagram]:
    """Deterministic batch: diagram i comes from substream i of cfg.seed.

    Per-diagram substreams make the corpus independent of batching or worker
    order, so identical (config, count) always yields identical output.
    """
    seeds = np.random.SeedSequence(cfg.seed).spawn(count)
    return [sample_diagram(cfg, np.random.default_rng(s)) for s in seeds]


def corpus_rng(cfg: SamplerConfig, index: int) -> np.random.Generator:
    """Generator for one corpus slot, matching :func:`sample_corpus`."""
    return np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(index + 1)[index])
