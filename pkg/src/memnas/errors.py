"""Exception types shared across the package."""


class ValidationError(ValueError):
    """An input value or structure violates its contract."""


class ChainError(ValidationError):
    """Consecutive layers of a network skeleton do not chain."""


class ResolutionError(ValidationError):
    """A spatial size cannot be divided through the stride stages."""


class InfeasibleError(RuntimeError):
    """No admissible value exists under the given constraint.

    Attributes carry context for diagnostics: ``stage`` (planner stage
    index, if any) and ``tightest_peak`` (smallest peak seen while
    rejection-sampling, if any).
    """

    def __init__(self, message, stage=None, tightest_peak=None):
        super().__init__(message)
        self.stage = stage
        self.tightest_peak = tightest_peak


class PartialDatasetError(RuntimeError):
    """Balanced sampling ran out of retry budget before filling buckets.

    ``occupancy`` maps bucket index to the number of rows collected.
    """

    def __init__(self, message, occupancy):
        super().__init__(message)
        self.occupancy = dict(occupancy)


class TrainingError(RuntimeError):
    """The regression problem is degenerate (e.g. singular with l2=0)."""
