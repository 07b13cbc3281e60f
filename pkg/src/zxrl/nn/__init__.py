"""From-scratch differentiable graph network: autodiff, layers, optimizer, checkpoints."""

from .adam import Adam
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .graphnet import CriticNet, GraphBatch, NetConfig, PolicyNet, PolicyOut, pack_observations
from .layers import MLP, Dense, orthogonal

__all__ = [
    "Adam",
    "CheckpointError",
    "CriticNet",
    "Dense",
    "GraphBatch",
    "MLP",
    "NetConfig",
    "PolicyNet",
    "PolicyOut",
    "orthogonal",
    "pack_observations",
    "load_checkpoint",
    "save_checkpoint",
]
