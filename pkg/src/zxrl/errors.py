"""Exception types shared across the package."""


class ZXError(Exception):
    """Base class for all zxrl errors."""


class DiagramError(ZXError):
    """A diagram violates a structural invariant or a serialized form is invalid."""


class MaskedActionError(ZXError):
    """A rewrite was requested whose precondition does not hold.

    Raised by rule application and by the environment when a caller steps a
    masked action index; indicates a caller bug, not bad user input.
    """


class OracleSizeError(ZXError):
    """Tensor contraction refused: the diagram exceeds the contraction cap."""


class SemanticsError(ZXError):
    """Tensor evaluation failed (e.g. a free symbol has no assigned value)."""


class DimensionMismatchError(ZXError):
    """Matrices compared for scalar equivalence have different shapes."""


class ZeroMatrixError(ZXError):
    """Scalar-equivalence is undefined: both matrices are numerically zero."""


class SamplerError(ZXError):
    """Random diagram generation kept producing empty diagrams."""


class TrainingFault(ZXError):
    """A non-finite value appeared during a network forward/backward pass."""


class ConfigError(ZXError):
    """Bad user-supplied configuration (unknown key, unparseable value)."""
