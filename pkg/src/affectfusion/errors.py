"""Exception types raised across the package."""


class AffectFusionError(Exception):
    """Base class for all package errors."""


class DegenerateInput(AffectFusionError, ValueError):
    """CCC is undefined: fewer than two valid entries or a zero denominator."""


class DegenerateBatch(AffectFusionError):
    """A training batch whose CCC terms cannot be computed."""


class EmptyEvaluation(AffectFusionError, ValueError):
    """Evaluation was requested over no videos."""


class ShapeMismatch(AffectFusionError, ValueError):
    pass


class IncompatibleCheckpoint(AffectFusionError):
    """Checkpoint tensors do not fit the target model.

    Attributes:
        problems: one human-readable line per offending tensor.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("incompatible checkpoint:\n  " + "\n  ".join(self.problems))


class AudioTooShort(AffectFusionError, ValueError):
    pass


class MissingCheckpoint(AffectFusionError, FileNotFoundError):
    pass


class StageOrderViolation(AffectFusionError):
    """A training stage was requested before its prerequisites exist."""
