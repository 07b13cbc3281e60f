"""Command line entry point: sampling, training, optimization, and probes.

Exit codes: 0 success, 1 contract violation (soundness failure, bad
checkpoint, masked action), 2 bad input (unknown config key, malformed file,
bad flag value).
"""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import rules
from .analysis import (
    anneal_strategy,
    copy_action_probability,
    copy_fuse_cumulative,
    evaluate,
    greedy_strategy,
    locality_epsilon,
    policy_from_checkpoint,
    policy_strategy,
    random_strategy,
)
from .baselines import AnnealConfig
from .config import known_keys, load_config, run_config_dict
from .diagram import dump_jsonl, load_jsonl
from .env import DEFAULT_STEP_BUDGET, action_from_index, observe
from .errors import ConfigError, ZXError
from .nn.graphnet import pack_observations
from .ppo import PPOTrainer, sample_actions
from .rules import EdgeAction, NodeAction, StopAction
from .sampler import SamplerConfig, sample_corpus
from .tensor import rewrite_preserves_semantics

_SAMPLER_FLAGS = (
    "n_init_lo",
    "n_init_hi",
    "io_lo",
    "io_hi",
    "n_neigh_lo",
    "n_neigh_hi",
    "hadamard_fraction_cap",
    "angle_downweight",
)


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def _add_config_flags(parser: argparse.ArgumentParser, keys=None) -> None:
    for key, kind in known_keys().items():
        if keys is not None and key not in keys:
            continue
        if kind is bool:
            parser.add_argument(
                _flag(key), dest=key, default=None, action=argparse.BooleanOptionalAction
            )
        else:
            parser.add_argument(_flag(key), dest=key, type=kind, default=None)


def _overrides(args: argparse.Namespace) -> dict:
    out = {}
    for key in known_keys():
        value = getattr(args, key, None)
        if value is not None:
            out[key] = value
    return out


def _sampler_config(args: argparse.Namespace, **defaults) -> SamplerConfig:
    rc = load_config(getattr(args, "config", None), _overrides(args))
    cfg = rc.sampler
    if defaults and not any(getattr(args, k, None) is not None for k in _SAMPLER_FLAGS):
        cfg = SamplerConfig(**defaults)
    return SamplerConfig(
        n_init_range=cfg.n_init_range,
        io_range=cfg.io_range,
        hadamard_fraction_cap=cfg.hadamard_fraction_cap,
        angle_downweight=cfg.angle_downweight,
        n_neigh_range=cfg.n_neigh_range,
        seed=args.seed,
    )


def _write_json(path: str, payload) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _load_corpus(path: str):
    try:
        return list(load_jsonl(path))
    except ZXError as exc:
        raise ConfigError(f"bad diagram file {path}: {exc}") from None


def _make_strategy(args: argparse.Namespace):
    name = args.strategy
    if name == "greedy":
        return greedy_strategy()
    if name == "random":
        return random_strategy()
    if name == "anneal":
        return anneal_strategy(
            AnnealConfig(
                t_start=args.t_start, c_ann=args.c_ann, max_steps=args.anneal_steps
            )
        )
    if args.checkpoint is None:
        raise ConfigError("--checkpoint is required for the policy strategy")
    policy, _ = policy_from_checkpoint(args.checkpoint)
    return policy_strategy(policy, sample=not args.argmax)


# -- commands ------------------------------------------------------------------


def cmd_sample(args) -> int:
    cfg = _sampler_config(args)
    corpus = sample_corpus(cfg, args.n)
    dump_jsonl(corpus, args.out)
    print(f"wrote {len(corpus)} diagrams to {args.out}")
    return 0


def cmd_train(args) -> int:
    rc = load_config(args.config, _overrides(args))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "config.json", dict(run_config_dict(rc), seed=args.seed))
    trainer = PPOTrainer(
        rc.ppo, rc.net, rc.sampler, root_seed=args.seed, out_dir=out_dir
    )
    path = trainer.run(resume=args.resume)
    print(f"trained {trainer.steps_done} steps; checkpoint at {path}")
    return 0


def cmd_optimize(args) -> int:
    strategy = _make_strategy(args)
    corpus = _load_corpus(args.infile)
    summary = evaluate(
        strategy,
        corpus,
        max_steps=args.max_steps,
        seed=args.seed,
        workers=args.workers,
    )
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w") as fh:
        for row in summary["per_diagram"]:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    print(
        f"{strategy.name}: mean best nodes "
        f"{summary['mean_best_nodes']:.3f} over {len(corpus)} diagrams"
    )
    return 0


def cmd_eval(args) -> int:
    if args.infile is not None:
        corpus = _load_corpus(args.infile)
        corpus_seed = None
    else:
        cfg = _sampler_config(args)
        corpus = sample_corpus(cfg, args.n)
        corpus_seed = args.seed
    strategy = _make_strategy(args)
    summary = evaluate(
        strategy,
        corpus,
        max_steps=args.max_steps,
        corpus_seed=corpus_seed,
        seed=args.seed,
        workers=args.workers,
    )
    _write_json(args.out, summary)
    print(
        f"{strategy.name}: mean best nodes {summary['mean_best_nodes']:.3f}, "
        f"mean alpha spiders {summary['mean_best_alpha']:.3f}, "
        f"mean time {summary['mean_time_s'] * 1e3:.1f} ms"
    )
    return 0


def cmd_verify(args) -> int:
    cfg = _sampler_config(args, n_init_range=(5, 10), io_range=(1, 3))
    corpus = sample_corpus(cfg, args.n)
    rng = np.random.default_rng(args.seed)
    checked = 0
    violations = []
    for index, d in enumerate(corpus):
        for action in sorted(rules.action_mask(d), key=str):
            out = rules.apply_action(d, action)
            checked += 1
            if not rewrite_preserves_semantics(d, out.diagram, rng, max_indices=args.max_indices):
                violations.append({"diagram": index, "action": _action_payload(action)})
    payload = {
        "diagrams": len(corpus),
        "actions_checked": checked,
        "violations": violations,
    }
    if args.out:
        _write_json(args.out, payload)
    print(f"{len(violations)} violations over {checked} actions on {len(corpus)} diagrams")
    return 1 if violations else 0


def _action_payload(action) -> dict:
    if isinstance(action, NodeAction):
        return {"node": action.node, "kind": action.kind.name}
    if isinstance(action, EdgeAction):
        return {"edge": list(action.edge), "kind": action.kind.name}
    return {"kind": "STOP"}


def cmd_analyze(args) -> int:
    if args.probe == "locality":
        return _analyze_locality(args)
    return _analyze_copy(args)


def _sample_rewrite_action(policy, d, rng):
    """Sample a policy action with the Stop probability zeroed out."""
    obs = observe(d, DEFAULT_STEP_BUDGET)
    batch = pack_observations([obs])
    probs = policy.forward(batch).probs()[:, 0].copy()
    probs[-1] = 0.0  # Stop is the last flat action and has no anchor
    total = probs.sum()
    if total <= 0.0:
        return None
    flat = int(rng.choice(len(probs), p=probs / total))
    return action_from_index(d, flat)


def _analyze_locality(args) -> int:
    policy, _ = policy_from_checkpoint(args.checkpoint)
    cfg = _sampler_config(args)
    corpus = sample_corpus(cfg, args.n)
    rng = np.random.default_rng((args.seed, 1))
    layers = list(range(args.max_layer + 1))
    rows = []
    for index, d in enumerate(corpus):
        action = _sample_rewrite_action(policy, d, rng)
        if action is None:
            continue
        for layer in layers:
            eps = locality_epsilon(policy, d, action, layer)
            rows.append(
                {
                    "diagram": index,
                    "action": _action_payload(action),
                    "layer": layer,
                    "epsilon": eps,
                }
            )
    means = [
        float(np.mean([r["epsilon"] for r in rows if r["layer"] == layer]))
        for layer in layers
    ]
    _write_json(
        args.out,
        {"layers": layers, "mean_epsilon": means, "samples": rows},
    )
    print("mean epsilon per layer: " + ", ".join(f"{m:.3g}" for m in means))
    return 0


def _analyze_copy(args) -> int:
    policy = None
    if args.checkpoint is not None:
        policy, _ = policy_from_checkpoint(args.checkpoint)
    rows = []
    for n_out in range(1, args.n_out_max + 1):
        for n_extra in range(n_out + 1):
            row = {
                "n_out": n_out,
                "n_extra": n_extra,
                "cumulative_reward": copy_fuse_cumulative(n_out, n_extra),
            }
            if policy is not None:
                row["p_copy"] = copy_action_probability(policy, n_out, n_extra)
            rows.append(row)
    _write_json(args.out, {"rows": rows})
    print(f"wrote {len(rows)} copy-scenario rows to {args.out}")
    return 0


# -- parser --------------------------------------------------------------------


def _add_common(parser, workers=False) -> None:
    parser.add_argument("--seed", type=int, default=0)
    if workers:
        parser.add_argument(
            "--workers", type=int, default=os.cpu_count() or 1,
            help="parallel diagram workers",
        )


def _add_strategy_flags(parser) -> None:
    parser.add_argument(
        "--strategy", choices=("greedy", "anneal", "random", "policy"), default="greedy"
    )
    parser.add_argument("--checkpoint", default=None)
    parser.add_argument(
        "--argmax", action="store_true", help="pick the most likely action instead of sampling"
    )
    parser.add_argument("--max-steps", type=int, default=DEFAULT_STEP_BUDGET)
    parser.add_argument("--t-start", type=float, default=0.5)
    parser.add_argument("--c-ann", type=float, default=1e-4)
    parser.add_argument("--anneal-steps", type=int, default=20000)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zxrl",
        description="ZX-diagram rewriting: sampling, PPO training, and baselines",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="sample a diagram corpus to JSON lines")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--out", required=True)
    _add_common(p)
    _add_config_flags(p, _SAMPLER_FLAGS)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("train", help="run PPO training from a config")
    p.add_argument("--config", default=None, help="key = value config file")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--resume", action="store_true")
    _add_common(p)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("optimize", help="apply a strategy to a diagram file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    _add_strategy_flags(p)
    _add_common(p, workers=True)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("eval", help="evaluate a strategy on a sampled corpus")
    p.add_argument("--in", dest="infile", default=None)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--out", required=True)
    _add_strategy_flags(p)
    _add_common(p, workers=True)
    _add_config_flags(p, _SAMPLER_FLAGS)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", help="oracle-check every unmasked action")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--out", default=None)
    p.add_argument(
        "--max-indices",
        type=int,
        default=48,
        help="contraction size cap passed to the oracle",
    )
    _add_common(p)
    _add_config_flags(p, _SAMPLER_FLAGS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("analyze", help="policy probes")
    probes = p.add_subparsers(dest="probe", required=True)

    q = probes.add_parser("locality", help="layer-restricted probability ratios")
    q.add_argument("--checkpoint", required=True)
    q.add_argument("--n", type=int, default=20)
    q.add_argument("--max-layer", type=int, default=8)
    q.add_argument("--out", required=True)
    _add_common(q)
    _add_config_flags(q, _SAMPLER_FLAGS)
    q.set_defaults(func=cmd_analyze)

    q = probes.add_parser("copy", help="copy-scenario grid")
    q.add_argument("--checkpoint", default=None)
    q.add_argument("--n-out-max", type=int, default=6)
    q.add_argument("--out", required=True)
    _add_common(q)
    q.set_defaults(func=cmd_analyze)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ZXError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
