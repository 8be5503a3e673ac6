"""Exception hierarchy shared by every module.

Every error this package raises derives from ``CascadeError`` so the CLI can turn
them into a one-line diagnostic. Errors about bad values also derive from
``ValueError``.
"""


class CascadeError(Exception):
    """Base class for errors raised by this package."""


# Numerics


class ShapeMismatchError(CascadeError, ValueError):
    """Operand shapes do not conform for an operation."""

    def __init__(self, op: str, *shapes: tuple):
        self.op = op
        self.shapes = shapes
        joined = " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: shape mismatch {joined}")


class NonFiniteError(CascadeError, ArithmeticError):
    """A tensor holds NaN or Inf."""

    def __init__(self, op: str):
        self.op = op
        super().__init__(f"{op}: non-finite value produced")


class NotScalarError(CascadeError, ValueError):
    """backward() was called on a non-scalar loss."""


class DetachedGraphError(CascadeError):
    """The loss was not recorded on a differentiation tape."""


class NonDeterministicLossError(CascadeError):
    """Two evaluations of a loss at the same parameters disagree."""


class CheckpointError(CascadeError):
    """A parameter checkpoint is malformed or missing."""


# Sampling


class ProbabilityRangeError(CascadeError, ValueError):
    """A probability map holds an entry outside [0, 1]."""

    def __init__(self, y: int, x: int, value: float):
        self.coord = (y, x)
        self.value = value
        super().__init__(f"probability {value!r} at (y={y}, x={x}) is outside [0, 1]")


class GridError(CascadeError, ValueError):
    """Candidate grid parameters are invalid."""


class NoInformativeCandidatesError(CascadeError, ValueError):
    """Every candidate weight is zero."""

    def __init__(self):
        super().__init__("no informative candidates: all sampling weights are zero")


class ResolutionMismatchError(CascadeError, ValueError):
    """Two maps that must share a resolution do not."""


# Cascade / model


class BoxOutOfBoundsError(CascadeError, ValueError):
    """A patch box leaves the image it indexes."""


class ResolutionCapError(CascadeError, ValueError):
    """The dense baseline was asked to run above its safety cap."""


class TrainingDivergedError(CascadeError):
    """Training produced a non-finite loss."""

    def __init__(self, step: int, value: float):
        self.step = step
        super().__init__(f"non-finite loss {value!r} at step {step}")


# Data


class EpisodeGenerationError(CascadeError):
    """No episode passing the coverage filter could be rendered."""


class ContextPoolError(CascadeError, ValueError):
    """The context pool cannot supply enough same-class pairs."""


class DatasetError(CascadeError):
    """A dataset directory is missing or inconsistent."""


class SplitMismatchError(CascadeError, ValueError):
    """Evaluation was requested on the training split without opting in."""


# Configuration / cost model


class ConfigError(CascadeError, ValueError):
    """A configuration file or override is invalid."""


class CostModelError(CascadeError, ValueError):
    """The analytic cost model received an unusable configuration."""


class MaskValueError(CascadeError, ValueError):
    """A mask that must be binary holds other values."""
