"""Message-passing policy and critic over batched diagram observations.

Any number of observations are packed into one block graph.  Per layer, each
undirected edge carries one message in each direction; the message net sees
(receiver, sender, edge) features, the aggregated sum feeds the node update,
and the edge update sees (edge, sum of endpoint features) which makes it
independent of endpoint order.  Six layers of this give an exact six-hop
receptive field for the per-node and per-edge action logits; the Stop logit
and the critic value pool over the whole graph plus the global summary
vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from ..env import Observation
from ..errors import TrainingFault
from . import autodiff as ad
from .autodiff import Tensor
from .layers import MLP, Dense

NEG_INF = -np.inf


@dataclass(frozen=True)
class NetConfig:
    width: int = 128
    mp_layers: int = 6
    node_features: int = 12
    edge_features: int = 1
    globals_dim: int = 17
    actions_per_node: int = 6
    actions_per_edge: int = 6

    def __post_init__(self):
        if self.width < 1 or self.mp_layers < 1:
            raise ValueError("width and mp_layers must be positive")


def _gather(idx: np.ndarray, n_src: int, data: np.ndarray | None = None) -> sparse.csr_matrix:
    """CSR with one entry per row: row i picks (or weights) source idx[i]."""
    idx = np.asarray(idx, dtype=np.int64)
    if data is None:
        data = np.ones(len(idx))
    indptr = np.arange(len(idx) + 1, dtype=np.int64)
    return sparse.csr_matrix((data, idx, indptr), shape=(len(idx), n_src))


def _rows(row_idx, col_idx, data, shape) -> sparse.csr_matrix:
    return sparse.csr_matrix((data, (row_idx, col_idx)), shape=shape).tocsr()


@dataclass
class GraphBatch:
    """Observations packed into one graph with the index maps forward needs."""

    n_graphs: int
    node_x: np.ndarray  # (N, 12)
    edge_x: np.ndarray  # (E, 1)
    globals_c: np.ndarray  # (B, 17)
    stop_counters: np.ndarray  # (B, 1)
    recv: sparse.csr_matrix  # (2E, N) message receiver gather
    send: sparse.csr_matrix  # (2E, N) message sender gather
    msg_edge: sparse.csr_matrix  # (2E, E) edge-feature duplication
    agg: sparse.csr_matrix  # (N, 2E) sum of incoming messages
    endpoints: sparse.csr_matrix  # (E, N) sum of the two endpoint features
    node_graph: sparse.csr_matrix  # (N, B) per-node broadcast of graph scalars
    edge_graph: sparse.csr_matrix  # (E, B)
    mean_node: sparse.csr_matrix  # (B, N)
    mean_edge: sparse.csr_matrix  # (B, E) zero rows for edgeless graphs
    perm: sparse.csr_matrix  # (L, 6N + 6E + B) flat-action layout gather
    seg: sparse.csr_matrix  # (B, L) per-graph sum over action slots
    expand: sparse.csr_matrix  # (L, B)
    starts: np.ndarray  # (B,) segment starts in the long axis
    mask: np.ndarray  # (L, 1) bool
    action_offsets: np.ndarray  # (B,) start of each graph's action block
    n_actions: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))

    @property
    def total_actions(self) -> int:
        return self.mask.shape[0]

    def long_index(self, graph: int, flat_action: int) -> int:
        """Index into the packed logits of one graph's flat action index."""
        if not 0 <= flat_action < self.n_actions[graph]:
            raise IndexError(f"flat action {flat_action} out of range for graph {graph}")
        return int(self.action_offsets[graph]) + flat_action


def pack_observations(observations: list[Observation]) -> GraphBatch:
    b = len(observations)
    if b == 0:
        raise ValueError("empty batch")
    n_per = np.array([len(o.node_ids) for o in observations], dtype=np.int64)
    e_per = np.array([len(o.edge_list) for o in observations], dtype=np.int64)
    node_off = np.concatenate([[0], np.cumsum(n_per)])
    edge_off = np.concatenate([[0], np.cumsum(e_per)])
    n, e = int(node_off[-1]), int(edge_off[-1])

    node_x = np.concatenate([o.node_features for o in observations], axis=0)
    edge_x = (
        np.concatenate([o.edge_features for o in observations], axis=0)
        if e
        else np.zeros((0, observations[0].edge_features.shape[1]))
    )
    globals_c = np.stack([o.globals_c for o in observations], axis=0)
    stops = np.array([[float(o.stop_counter)] for o in observations])

    send_idx = np.empty(2 * e, dtype=np.int64)
    recv_idx = np.empty(2 * e, dtype=np.int64)
    msg_edge_idx = np.repeat(np.arange(e, dtype=np.int64), 2)
    end_rows = np.repeat(np.arange(e, dtype=np.int64), 2)
    end_cols = np.empty(2 * e, dtype=np.int64)
    for g, o in enumerate(observations):
        pos = {nid: node_off[g] + i for i, nid in enumerate(o.node_ids)}
        for j, (u, v) in enumerate(o.edge_list):
            k = edge_off[g] + j
            pu, pv = pos[u], pos[v]
            recv_idx[2 * k], send_idx[2 * k] = pu, pv
            recv_idx[2 * k + 1], send_idx[2 * k + 1] = pv, pu
            end_cols[2 * k], end_cols[2 * k + 1] = pu, pv

    recv = _gather(recv_idx, n)
    send = _gather(send_idx, n)
    msg_edge = _gather(msg_edge_idx, e)
    agg = recv.T.tocsr()
    endpoints = _rows(end_rows, end_cols, np.ones(2 * e), (e, n))

    node_graph = _gather(np.repeat(np.arange(b), n_per), b)
    edge_graph = _gather(np.repeat(np.arange(b), e_per), b)
    mean_node = _rows(
        np.repeat(np.arange(b), n_per),
        np.arange(n),
        np.repeat(1.0 / n_per, n_per),
        (b, n),
    )
    e_safe = np.maximum(e_per, 1)
    mean_edge = _rows(
        np.repeat(np.arange(b), e_per),
        np.arange(e),
        np.repeat(1.0 / e_safe, e_per),
        (b, e),
    )

    sizes = 6 * n_per + 6 * e_per + 1
    starts = np.concatenate([[0], np.cumsum(sizes)])[:-1]
    total = int(sizes.sum())
    perm_idx = np.empty(total, dtype=np.int64)
    mask = np.empty(total, dtype=bool)
    for g, o in enumerate(observations):
        lo = starts[g]
        nn, ne = 6 * n_per[g], 6 * e_per[g]
        perm_idx[lo:lo + nn] = np.arange(6 * node_off[g], 6 * node_off[g + 1])
        perm_idx[lo + nn:lo + nn + ne] = 6 * n + np.arange(6 * edge_off[g], 6 * edge_off[g + 1])
        perm_idx[lo + nn + ne] = 6 * n + 6 * e + g
        mask[lo:lo + sizes[g]] = o.mask
    perm = _gather(perm_idx, 6 * n + 6 * e + b)
    expand = _gather(np.repeat(np.arange(b), sizes), b)
    seg = expand.T.tocsr()

    return GraphBatch(
        n_graphs=b,
        node_x=node_x,
        edge_x=edge_x,
        globals_c=globals_c,
        stop_counters=stops,
        recv=recv,
        send=send,
        msg_edge=msg_edge,
        agg=agg,
        endpoints=endpoints,
        node_graph=node_graph,
        edge_graph=edge_graph,
        mean_node=mean_node,
        mean_edge=mean_edge,
        perm=perm,
        seg=seg,
        expand=expand,
        starts=starts,
        mask=mask.reshape(-1, 1),
        action_offsets=starts.copy(),
        n_actions=sizes,
    )


class _Trunk:
    """The shared message-passing stack (separate instance per network)."""

    def __init__(self, prefix: str, cfg: NetConfig):
        self.cfg = cfg
        self.layers: list[tuple[Dense, Dense, Dense]] = []
        wn, we = cfg.node_features, cfg.edge_features
        for i in range(cfg.mp_layers):
            psi = Dense(f"{prefix}/mp{i}/psi", 2 * wn + we, cfg.width)
            phi = Dense(f"{prefix}/mp{i}/phi", wn + cfg.width, cfg.width)
            theta = Dense(f"{prefix}/mp{i}/theta", we + wn, cfg.width)
            self.layers.append((psi, phi, theta))
            wn = we = cfg.width

    def __call__(self, batch: GraphBatch, x: Tensor, e: Tensor) -> tuple[Tensor, Tensor]:
        for psi, phi, theta in self.layers:
            x_recv = ad.csr_apply(batch.recv, x)
            x_send = ad.csr_apply(batch.send, x)
            e_msg = ad.csr_apply(batch.msg_edge, e)
            messages = psi(ad.concat([x_recv, x_send, e_msg], axis=1))
            incoming = ad.csr_apply(batch.agg, messages)
            e_next = theta(ad.concat([e, ad.csr_apply(batch.endpoints, x)], axis=1))
            x = phi(ad.concat([x, incoming], axis=1))
            e = e_next
        return x, e

    def params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for psi, phi, theta in self.layers:
            for d in (psi, phi, theta):
                out.update(d.params())
        return out

    def init(self, rng: np.random.Generator, gain: float) -> None:
        for psi, phi, theta in self.layers:
            for d in (psi, phi, theta):
                d.init(rng, gain)


def _check_finite(t: Tensor, what: str, params: dict[str, Tensor]) -> None:
    if np.isfinite(t.value).all():
        return
    worst = max(params.items(), key=lambda kv: float(np.abs(kv[1].value).max()))
    raise TrainingFault(
        f"non-finite {what}; largest parameter {worst[0]} "
        f"max|w| = {float(np.abs(worst[1].value).max()):.3e}"
    )


@dataclass
class PolicyOut:
    logits: Tensor  # (L, 1) raw, pre-mask
    masked_logits: Tensor  # (L, 1) with -inf at masked slots
    log_probs: Tensor  # (L, 1) -inf at masked slots

    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs.value)


class PolicyNet:
    def __init__(self, cfg: NetConfig = NetConfig()):
        self.cfg = cfg
        w = cfg.width
        self.trunk = _Trunk("policy", cfg)
        self.chi_node = MLP("policy/chi_node", [w + 1, w, cfg.actions_per_node])
        self.chi_edge = MLP("policy/chi_edge", [w + 1, w, cfg.actions_per_edge])
        self.chi_stop = MLP("policy/chi_stop", [cfg.globals_dim + 2 * w, w, w, 1])

    def init(self, rng: np.random.Generator) -> "PolicyNet":
        self.trunk.init(rng, np.sqrt(2.0))
        for head in (self.chi_node, self.chi_edge, self.chi_stop):
            head.init(rng, hidden_gain=np.sqrt(2.0), out_gain=0.01)
        return self

    def params(self) -> dict[str, Tensor]:
        out = self.trunk.params()
        for head in (self.chi_node, self.chi_edge, self.chi_stop):
            out.update(head.params())
        return out

    def forward(self, batch: GraphBatch) -> PolicyOut:
        xf, ef = self.trunk(batch, Tensor(batch.node_x), Tensor(batch.edge_x))
        stop_n = ad.csr_apply(batch.node_graph, Tensor(batch.stop_counters))
        stop_e = ad.csr_apply(batch.edge_graph, Tensor(batch.stop_counters))
        node_logits = self.chi_node(ad.concat([xf, stop_n], axis=1))
        edge_logits = self.chi_edge(ad.concat([ef, stop_e], axis=1))
        pooled = ad.concat(
            [
                Tensor(batch.globals_c),
                ad.csr_apply(batch.mean_node, xf),
                ad.csr_apply(batch.mean_edge, ef),
            ],
            axis=1,
        )
        stop_logit = self.chi_stop(pooled)
        flat = ad.concat(
            [
                ad.reshape(node_logits, (-1, 1)),
                ad.reshape(edge_logits, (-1, 1)),
                stop_logit,
            ],
            axis=0,
        )
        logits = ad.csr_apply(batch.perm, flat)
        _check_finite(logits, "policy logits", self.params())
        masked = ad.where_mask(batch.mask, logits, NEG_INF)
        lse = ad.segment_logsumexp(masked, batch.starts, batch.seg, batch.expand)
        log_probs = ad.sub(masked, lse)
        return PolicyOut(logits, masked, log_probs)


class CriticNet:
    def __init__(self, cfg: NetConfig = NetConfig()):
        self.cfg = cfg
        w = cfg.width
        self.trunk = _Trunk("critic", cfg)
        self.head = MLP("critic/head", [cfg.globals_dim + 2 * w, w, w, 1])

    def init(self, rng: np.random.Generator) -> "CriticNet":
        self.trunk.init(rng, np.sqrt(2.0))
        self.head.init(rng, hidden_gain=np.sqrt(2.0), out_gain=1.0)
        return self

    def params(self) -> dict[str, Tensor]:
        out = self.trunk.params()
        out.update(self.head.params())
        return out

    def forward(self, batch: GraphBatch) -> Tensor:
        xf, ef = self.trunk(batch, Tensor(batch.node_x), Tensor(batch.edge_x))
        pooled = ad.concat(
            [
                Tensor(batch.globals_c),
                ad.csr_apply(batch.mean_node, xf),
                ad.csr_apply(batch.mean_edge, ef),
            ],
            axis=1,
        )
        value = self.head(pooled)
        _check_finite(value, "critic value", self.params())
        return value
