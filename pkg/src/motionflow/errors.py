"""Exception types shared across the package."""


class MotionflowError(Exception):
    """Base class for all package errors."""


class DegenerateInput(MotionflowError):
    """Rotation input is numerically degenerate (zero or parallel columns)."""


class NotARotation(MotionflowError):
    """Matrix fails the orthonormality check."""


class DegenerateFacing(MotionflowError):
    """Facing direction is too close to vertical to define a heading."""


class TooShort(MotionflowError):
    """Clip would have fewer than two frames."""


class ShapeMismatch(MotionflowError):
    """Operands have incompatible shapes."""


class NonFinite(MotionflowError):
    """A NaN or Inf was produced."""


class NonDeterministic(MotionflowError):
    """Two forward passes of a supposedly deterministic function disagreed."""


class ConfigInvalid(MotionflowError):
    """A configuration value violates its constraints."""


class UnknownToken(MotionflowError):
    """Token id outside the vocabulary."""


class OddHeadDim(MotionflowError):
    """Rotary embedding requires an even head dimension."""


class InvalidSpec(MotionflowError):
    """Action spec violates the taxonomy constraints."""


class UnknownAction(MotionflowError):
    """Prompt does not resolve to any action class in the taxonomy."""


class EmptyPrompt(MotionflowError):
    """Prompt is empty or whitespace."""


class CheckpointMismatch(MotionflowError):
    """Checkpoint contents disagree with the architecture manifest."""


class DegenerateGroup(MotionflowError):
    """All rewards in a GRPO group are identical."""


class IoError(MotionflowError, OSError):
    """File could not be read or written."""
