"""Flat key-value run configuration shared by the command line tools.

A config file is plain text, one ``key = value`` pair per line, with ``#``
comments.  Keys carry the training-table names (n_env, n_minibatch, c_kl,
clip, ...) plus network size, sampler, and feature-flag settings, so a whole
run is pinned down by one small file and a seed.
"""

import difflib
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError
from .nn.graphnet import NetConfig
from .ppo import PPOConfig
from .sampler import SamplerConfig

__all__ = [
    "RunConfig",
    "known_keys",
    "load_config",
    "parse_config_text",
    "run_config_dict",
]


@dataclass(frozen=True)
class RunConfig:
    ppo: PPOConfig
    net: NetConfig
    sampler: SamplerConfig


# Sampler ranges are exposed as lo/hi scalar keys so the file format stays
# one value per line.
_SAMPLER_RANGE_KEYS = {
    "n_init_lo": ("n_init_range", 0),
    "n_init_hi": ("n_init_range", 1),
    "io_lo": ("io_range", 0),
    "io_hi": ("io_range", 1),
    "n_neigh_lo": ("n_neigh_range", 0),
    "n_neigh_hi": ("n_neigh_range", 1),
}
_SAMPLER_SCALAR_KEYS = ("hadamard_fraction_cap", "angle_downweight")
_NET_KEYS = ("width", "mp_layers")


def _ppo_key_types() -> dict[str, type]:
    defaults = PPOConfig()
    return {f.name: type(getattr(defaults, f.name)) for f in fields(PPOConfig)}


def known_keys() -> dict[str, type]:
    """Every accepted config key and the type its value is parsed as."""
    keys = _ppo_key_types()
    for name in _NET_KEYS:
        keys[name] = int
    for name in _SAMPLER_RANGE_KEYS:
        keys[name] = int
    for name in _SAMPLER_SCALAR_KEYS:
        keys[name] = float
    return keys


def _parse_value(key: str, text: str, kind: type):
    text = text.strip()
    if kind is bool:
        low = text.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {text!r}")
    try:
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected {kind.__name__}, got {text!r}") from None
    raise ConfigError(f"{key}: unsupported value type {kind!r}")


def _reject_unknown(key: str) -> None:
    close = difflib.get_close_matches(key, known_keys(), n=1)
    hint = f"; did you mean {close[0]!r}?" if close else ""
    raise ConfigError(f"unknown config key {key!r}{hint}")


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines into typed values."""
    keys = known_keys()
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in keys:
            _reject_unknown(key)
        out[key] = _parse_value(key, value, keys[key])
    return out


def _apply_pairs(rc: RunConfig, pairs: dict) -> RunConfig:
    ppo_types = _ppo_key_types()
    ppo_kw: dict = {}
    net_kw: dict = {}
    ranges = {
        name: list(getattr(rc.sampler, name))
        for name in ("n_init_range", "io_range", "n_neigh_range")
    }
    sampler_kw: dict = {}
    for key, value in pairs.items():
        if key in ppo_types:
            ppo_kw[key] = value
        elif key in _NET_KEYS:
            net_kw[key] = value
        elif key in _SAMPLER_RANGE_KEYS:
            name, side = _SAMPLER_RANGE_KEYS[key]
            ranges[name][side] = value
        elif key in _SAMPLER_SCALAR_KEYS:
            sampler_kw[key] = value
        else:
            _reject_unknown(key)
    for name, pair in ranges.items():
        if tuple(pair) != getattr(rc.sampler, name):
            sampler_kw[name] = tuple(pair)
    try:
        return RunConfig(
            ppo=replace(rc.ppo, **ppo_kw) if ppo_kw else rc.ppo,
            net=replace(rc.net, **net_kw) if net_kw else rc.net,
            sampler=replace(rc.sampler, **sampler_kw) if sampler_kw else rc.sampler,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the config file, then explicit overrides."""
    rc = RunConfig(ppo=PPOConfig(), net=NetConfig(), sampler=SamplerConfig())
    if path is not None:
        file = Path(path)
        if not file.exists():
            raise ConfigError(f"config file not found: {path}")
        rc = _apply_pairs(rc, parse_config_text(file.read_text()))
    if overrides:
        rc = _apply_pairs(rc, overrides)
    return rc


def run_config_dict(rc: RunConfig) -> dict:
    """Flat key -> value mapping covering every known key (for run logs)."""
    out = {name: getattr(rc.ppo, name) for name in _ppo_key_types()}
    for name in _NET_KEYS:
        out[name] = getattr(rc.net, name)
    for key, (name, side) in _SAMPLER_RANGE_KEYS.items():
        out[key] = getattr(rc.sampler, name)[side]
    for name in _SAMPLER_SCALAR_KEYS:
        out[name] = getattr(rc.sampler, name)
    return out
