"""PPO trainer: lockstep vectorized rollouts, GAE, clipped surrogate updates.

The rollout driver steps every environment once per tick and batches all of
their observations into a single network forward.  Updates run a fixed number
of epochs over shuffled minibatches with per-minibatch advantage
normalization; after each epoch the approximate KL divergence to the sampling
policy is measured on the whole batch and the remaining epochs are skipped
once it exceeds the configured bound.  Gradients are clipped per component
and then by global norm, and both networks share one ADAM instance.

Metrics stream to a JSON-lines file (no timestamps, so identical runs write
identical bytes); checkpoints carry both networks, the optimizer state, and
progress counters, which makes runs resumable.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .env import Observation, ZXEnv, observe
from .errors import TrainingFault
from .nn import Adam, CriticNet, NetConfig, PolicyNet, pack_observations
from .nn import autodiff as ad
from .nn import load_checkpoint, save_checkpoint
from .nn.graphnet import GraphBatch, _gather
from .sampler import SamplerConfig, sample_diagram


@dataclass(frozen=True)
class PPOConfig:
    n_env: int = 90
    n_max: int = 1000
    n_minibatch: int = 3000
    n_train: int = 10
    c_kl: float = 0.01
    clip: float = 0.2
    entropy_coef: float = 0.1
    c_absgrad: float = 100.0
    c_normgrad: float = 0.5
    gamma: float = 0.99
    lam: float = 0.9
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    value_coef: float = 0.5
    total_steps: int = 36_000_000
    step_budget: int = 200
    grad_shard: int = 500
    checkpoint_every: int = 1
    # feature flags for structural ablations
    stop_action: bool = True
    stop_counter: bool = True
    entropy_bonus: bool = True
    entropy_annealing: bool = True
    clip_annealing: bool = True
    kl_early_stop: bool = True

    def __post_init__(self):
        for name in ("n_env", "n_max", "n_minibatch", "n_train", "total_steps",
                     "step_budget", "grad_shard"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class RolloutBatch:
    observations: list[Observation]
    actions: np.ndarray  # flat action index per transition
    old_logps: np.ndarray
    values: np.ndarray
    rewards: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray
    episode_rewards: list[int]
    episode_lengths: list[int]

    def __len__(self):
        return len(self.observations)


def gae(
    rewards: np.ndarray,
    values: np.ndarray,
    next_values: np.ndarray,
    ends: np.ndarray,
    gamma: float,
    lam: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation along one rolled-out sequence.

    ``next_values`` holds V(s_{t+1}) with the terminal convention already
    applied: 0 after a Stop, the bootstrap estimate after a truncation or at
    the batch boundary.  ``ends`` flags the last transition of an episode
    (either kind), where the recursion restarts.
    """
    t = len(rewards)
    adv = np.zeros(t)
    running = 0.0
    for i in range(t - 1, -1, -1):
        delta = rewards[i] + gamma * next_values[i] - values[i]
        running = delta if ends[i] else delta + gamma * lam * running
        adv[i] = running
    return adv, adv + values


def apply_feature_flags(obs: Observation, cfg: PPOConfig) -> Observation:
    """Ablation hooks: hide the stop counter and/or the Stop action."""
    if cfg.stop_counter and cfg.stop_action:
        return obs
    mask = obs.mask
    globals_c = obs.globals_c
    stop_counter = obs.stop_counter
    if not cfg.stop_counter:
        stop_counter = 0
        globals_c = globals_c.copy()
        globals_c[15] = 0.0
    if not cfg.stop_action and mask[:-1].any():
        mask = mask.copy()
        mask[-1] = False
    return Observation(
        node_ids=obs.node_ids,
        node_features=obs.node_features,
        edge_list=obs.edge_list,
        edge_features=obs.edge_features,
        globals_c=globals_c,
        mask=mask,
        stop_counter=stop_counter,
    )


def sample_actions(
    probs: np.ndarray, batch: GraphBatch, rng: np.random.Generator
) -> np.ndarray:
    """Draw one flat action index per graph from the masked policy."""
    out = np.empty(batch.n_graphs, dtype=np.int64)
    for g in range(batch.n_graphs):
        lo = batch.action_offsets[g]
        block = probs[lo:lo + batch.n_actions[g], 0].clip(min=0.0)
        block = block / block.sum()
        out[g] = rng.choice(len(block), p=block)
    return out


def policy_entropy(log_probs: ad.Tensor, batch: GraphBatch) -> ad.Tensor:
    """Per-graph entropy of the masked policy, (B, 1)."""
    p = ad.exp(log_probs)
    safe = ad.where_mask(batch.mask, log_probs, 0.0)
    plogp = ad.csr_apply(batch.seg, ad.mul(p, safe))
    return ad.mul(plogp, -1.0)


def ppo_losses(
    policy: PolicyNet,
    critic: CriticNet,
    observations: list[Observation],
    actions: np.ndarray,
    old_logps: np.ndarray,
    advantages: np.ndarray,
    returns: np.ndarray,
    clip_c: float,
    ent_coef: float,
    value_coef: float = 0.5,
    scale: float | None = None,
) -> tuple[ad.Tensor, dict]:
    """Clipped-surrogate + value MSE + entropy bonus over one shard.

    ``scale`` divides the summed loss (pass the minibatch size when
    accumulating gradients over several shards).
    """
    n = len(observations)
    batch = pack_observations(observations)
    out = policy.forward(batch)
    sel = np.array([batch.long_index(g, int(a)) for g, a in enumerate(actions)])
    chosen = ad.csr_apply(_gather(sel, batch.total_actions), out.log_probs)
    ratio = ad.exp(ad.sub(chosen, ad.Tensor(old_logps.reshape(-1, 1))))
    adv = ad.Tensor(advantages.reshape(-1, 1))
    unclipped = ad.mul(ratio, adv)
    clipped = ad.mul(ad.clip(ratio, 1.0 - clip_c, 1.0 + clip_c), adv)
    surrogate = ad.minimum(unclipped, clipped)
    entropy = policy_entropy(out.log_probs, batch)
    values = critic.forward(batch)
    err = ad.sub(values, ad.Tensor(returns.reshape(-1, 1)))
    inv = 1.0 / (scale if scale is not None else n)
    loss = ad.add(
        ad.mul(ad.sum_all(surrogate), -inv),
        ad.sub(
            ad.mul(ad.sum_all(ad.mul(err, err)), value_coef * inv),
            ad.mul(ad.sum_all(entropy), ent_coef * inv),
        ),
    )
    ratio_v = ratio.value[:, 0]
    metrics = {
        "policy_loss": float(-surrogate.value.sum() / n),
        "value_loss": float((err.value ** 2).sum() / n),
        "entropy": float(entropy.value.sum() / n),
        "clip_frac": float((np.abs(ratio_v - 1.0) > clip_c).mean()),
        "approx_kl": float(((ratio_v - 1.0) - np.log(ratio_v)).mean()),
    }
    return loss, metrics


def mean_approx_kl(
    policy: PolicyNet,
    observations: list[Observation],
    actions: np.ndarray,
    old_logps: np.ndarray,
    shard: int,
) -> float:
    """Approximate KL of the current policy to the sampling policy."""
    total = 0.0
    for lo in range(0, len(observations), shard):
        obs = observations[lo:lo + shard]
        acts = actions[lo:lo + shard]
        batch = pack_observations(obs)
        out = policy.forward(batch)
        sel = np.array([batch.long_index(g, int(a)) for g, a in enumerate(acts)])
        new_logps = out.log_probs.value[sel, 0]
        ratio = np.exp(new_logps - old_logps[lo:lo + shard])
        total += float(((ratio - 1.0) - np.log(ratio)).sum())
    return total / len(observations)


def clip_gradients(grads: dict[str, np.ndarray], c_abs: float, c_norm: float) -> dict[str, np.ndarray]:
    clipped = {k: np.clip(g, -c_abs, c_abs) for k, g in grads.items()}
    sq = sum(float((g * g).sum()) for g in clipped.values())
    norm = np.sqrt(sq)
    if norm > c_norm:
        factor = c_norm / norm
        clipped = {k: g * factor for k, g in clipped.items()}
    return clipped


class PPOTrainer:
    def __init__(
        self,
        cfg: PPOConfig,
        net_cfg: NetConfig,
        sampler_cfg: SamplerConfig,
        root_seed: int = 0,
        out_dir: str | Path = "runs/ppo",
    ):
        self.cfg = cfg
        self.net_cfg = net_cfg
        self.sampler_cfg = sampler_cfg
        self.root_seed = int(root_seed)
        self.out_dir = Path(out_dir)
        self.policy = PolicyNet(net_cfg).init(self._rng("policy-init"))
        self.critic = CriticNet(net_cfg).init(self._rng("critic-init"))
        self.params = {**self.policy.params(), **self.critic.params()}
        self.opt = Adam(self.params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)
        self.steps_done = 0
        self.phase = 0
        self.envs = [ZXEnv(step_budget=cfg.step_budget) for _ in range(cfg.n_env)]
        self._env_rngs = [self._rng("env", i) for i in range(cfg.n_env)]
        self._episode_rewards = [0] * cfg.n_env
        self._episode_lengths = [0] * cfg.n_env
        for i in range(cfg.n_env):
            self._reset_env(i)

    def _rng(self, role: str, index: int = 0) -> np.random.Generator:
        key = (self.root_seed, zlib.crc32(role.encode()), index)
        return np.random.default_rng(np.random.SeedSequence(key))

    def _phase_rng(self, role_index: int) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence((self.root_seed, self.phase, role_index))
        )

    def _reset_env(self, i: int) -> None:
        d = sample_diagram(self.sampler_cfg, self._env_rngs[i])
        self.envs[i].reset(d)
        self._episode_rewards[i] = 0
        self._episode_lengths[i] = 0

    def _observations(self) -> list[Observation]:
        return [
            apply_feature_flags(observe(env.diagram, env.steps_left), self.cfg)
            for env in self.envs
        ]

    def collect(self) -> RolloutBatch:
        cfg = self.cfg
        act_rng = self._phase_rng(1)
        n = cfg.n_env * cfg.n_max
        observations: list[Observation] = []
        actions = np.empty(n, dtype=np.int64)
        logps = np.empty(n)
        values = np.empty(n)
        rewards = np.empty(n)
        next_values = np.empty(n)
        ends = np.zeros(n, dtype=bool)
        bootstrap_slots: list[tuple[int, Observation]] = []
        episode_rewards: list[int] = []
        episode_lengths: list[int] = []

        for t in range(cfg.n_max):
            obs = self._observations()
            batch = pack_observations(obs)
            out = self.policy.forward(batch)
            vals = self.critic.forward(batch).value[:, 0]
            chosen = sample_actions(out.probs(), batch, act_rng)
            base = t * cfg.n_env
            for i in range(cfg.n_env):
                k = base + i
                observations.append(obs[i])
                actions[k] = chosen[i]
                logps[k] = out.log_probs.value[batch.long_index(i, int(chosen[i])), 0]
                values[k] = vals[i]
                res = self.envs[i].step(int(chosen[i]))
                rewards[k] = res.reward
                self._episode_rewards[i] += res.reward
                self._episode_lengths[i] += 1
                if res.done:
                    ends[k] = True
                    if res.truncated:
                        bootstrap_slots.append(
                            (k, apply_feature_flags(res.observation, self.cfg))
                        )
                    else:
                        next_values[k] = 0.0
                    episode_rewards.append(self._episode_rewards[i])
                    episode_lengths.append(self._episode_lengths[i])
                    self._reset_env(i)
                else:
                    next_values[k] = np.nan  # filled from the next tick below

        # V_{t+1} for mid-episode transitions is the value recorded one tick
        # later for the same environment; the final tick bootstraps from the
        # live environments.
        for t in range(cfg.n_max - 1):
            base = t * cfg.n_env
            for i in range(cfg.n_env):
                k = base + i
                if not ends[k]:
                    next_values[k] = values[k + cfg.n_env]
        final_obs = self._observations()
        final_vals = self.critic.forward(pack_observations(final_obs)).value[:, 0]
        base = (cfg.n_max - 1) * cfg.n_env
        for i in range(cfg.n_env):
            k = base + i
            if not ends[k]:
                next_values[k] = final_vals[i]
                ends[k] = True  # GAE restarts at the batch boundary
        if bootstrap_slots:
            boot_batch = pack_observations([o for _, o in bootstrap_slots])
            boot_vals = self.critic.forward(boot_batch).value[:, 0]
            for (k, _), v in zip(bootstrap_slots, boot_vals):
                next_values[k] = v

        # GAE runs per environment stream (stride n_env).
        advantages = np.empty(n)
        returns = np.empty(n)
        for i in range(cfg.n_env):
            sl = slice(i, n, cfg.n_env)
            adv, ret = gae(
                rewards[sl], values[sl], next_values[sl], ends[sl], cfg.gamma, cfg.lam
            )
            advantages[sl] = adv
            returns[sl] = ret
        return RolloutBatch(
            observations=observations,
            actions=actions,
            old_logps=logps,
            values=values,
            rewards=rewards,
            advantages=advantages,
            returns=returns,
            episode_rewards=episode_rewards,
            episode_lengths=episode_lengths,
        )

    def update(self, batch: RolloutBatch, progress: float) -> dict:
        cfg = self.cfg
        clip_c = cfg.clip * (1.0 - progress) if cfg.clip_annealing else cfg.clip
        clip_c = max(clip_c, 1e-8)
        ent = cfg.entropy_coef if cfg.entropy_bonus else 0.0
        if cfg.entropy_annealing:
            ent *= 1.0 - progress
        perm_rng = self._phase_rng(2)
        n = len(batch)
        per_minibatch: dict[str, list[float]] = {}
        approx_kl = 0.0
        epochs_run = 0
        for _ in range(cfg.n_train):
            order = perm_rng.permutation(n)
            for lo in range(0, n - cfg.n_minibatch + 1, cfg.n_minibatch):
                idx = order[lo:lo + cfg.n_minibatch]
                adv = batch.advantages[idx]
                adv = (adv - adv.mean()) / (adv.std() + 1e-8)
                for t in self.params.values():
                    t.grad = None
                mb_metrics: dict[str, float] = {}
                for s in range(0, len(idx), cfg.grad_shard):
                    part = idx[s:s + cfg.grad_shard]
                    loss, m = ppo_losses(
                        self.policy,
                        self.critic,
                        [batch.observations[j] for j in part],
                        batch.actions[part],
                        batch.old_logps[part],
                        adv[s:s + cfg.grad_shard],
                        batch.returns[part],
                        clip_c,
                        ent,
                        cfg.value_coef,
                        scale=len(idx),
                    )
                    if not np.isfinite(loss.value):
                        self.save(self.out_dir / "fault.ckpt")
                        raise TrainingFault(
                            f"non-finite loss at step {self.steps_done}; "
                            f"checkpoint dumped to {self.out_dir / 'fault.ckpt'}"
                        )
                    loss.backward()
                    w = len(part) / len(idx)
                    for key, val in m.items():
                        mb_metrics[key] = mb_metrics.get(key, 0.0) + val * w
                grads = {
                    k: t.grad for k, t in self.params.items() if t.grad is not None
                }
                grads = clip_gradients(grads, cfg.c_absgrad, cfg.c_normgrad)
                self.opt.step(grads)
                for key, val in mb_metrics.items():
                    per_minibatch.setdefault(key, []).append(val)
            epochs_run += 1
            approx_kl = mean_approx_kl(
                self.policy, batch.observations, batch.actions, batch.old_logps,
                cfg.grad_shard,
            )
            if cfg.kl_early_stop and approx_kl > cfg.c_kl:
                break
        out = {k: float(np.mean(v)) for k, v in per_minibatch.items()}
        out["approx_kl"] = approx_kl
        out["epochs"] = epochs_run
        return out

    def log_line(self, fh, batch: RolloutBatch, metrics: dict) -> None:
        rec = {
            "step": self.steps_done,
            "phase": self.phase,
            "mean_cum_reward": (
                float(np.mean(batch.episode_rewards)) if batch.episode_rewards else None
            ),
            "episodes": len(batch.episode_rewards),
            "policy_loss": metrics.get("policy_loss"),
            "value_loss": metrics.get("value_loss"),
            "entropy": metrics.get("entropy"),
            "approx_kl": metrics.get("approx_kl"),
            "clip_frac": metrics.get("clip_frac"),
            "epochs": metrics.get("epochs"),
        }
        fh.write(json.dumps(rec, sort_keys=True) + "\n")
        fh.flush()

    def save(self, path) -> None:
        tensors = {k: t.value for k, t in self.params.items()}
        tensors.update(self.opt.state_tensors())
        counters = {
            "steps": self.steps_done,
            "phase": self.phase,
            "width": self.net_cfg.width,
            "mp_layers": self.net_cfg.mp_layers,
        }
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        save_checkpoint(path, tensors, counters)

    def load(self, path) -> None:
        tensors, counters = load_checkpoint(path)
        if counters.get("width") != self.net_cfg.width or (
            counters.get("mp_layers") != self.net_cfg.mp_layers
        ):
            raise TrainingFault(
                f"checkpoint {path} was written for width "
                f"{counters.get('width')}/{counters.get('mp_layers')} layers, "
                f"not {self.net_cfg.width}/{self.net_cfg.mp_layers}"
            )
        for k, t in self.params.items():
            t.value[...] = tensors[k]
        self.opt.load_state(tensors)
        self.steps_done = counters["steps"]
        self.phase = counters["phase"]

    def run(self, resume: bool = False) -> Path:
        cfg = self.cfg
        self.out_dir.mkdir(parents=True, exist_ok=True)
        latest = self.out_dir / "latest.ckpt"
        if resume and latest.exists():
            self.load(latest)
        mode = "a" if resume and self.steps_done else "w"
        with open(self.out_dir / "metrics.jsonl", mode) as fh:
            while self.steps_done < cfg.total_steps:
                progress = self.steps_done / cfg.total_steps
                batch = self.collect()
                metrics = self.update(batch, progress)
                self.steps_done += len(batch)
                self.phase += 1
                self.log_line(fh, batch, metrics)
                if self.phase % cfg.checkpoint_every == 0:
                    self.save(latest)
            self.save(latest)
        return latest
