"""ZX-diagram rewriting as an RL environment, with baselines and a PPO agent."""

from .angles import Angle
from .diagram import Diagram, NodeKind, deserialize, isomorphic, serialize
from .errors import (
    ConfigError,
    DiagramError,
    MaskedActionError,
    OracleSizeError,
    SemanticsError,
    TrainingFault,
    ZXError,
)
from .tensor import equivalent_up_to_scalar, semantics, spider_tensor

__all__ = [
    "Angle",
    "Diagram",
    "NodeKind",
    "serialize",
    "deserialize",
    "isomorphic",
    "semantics",
    "spider_tensor",
    "equivalent_up_to_scalar",
    "ZXError",
    "DiagramError",
    "MaskedActionError",
    "OracleSizeError",
    "SemanticsError",
    "TrainingFault",
    "ConfigError",
]

__version__ = "0.1.0"
