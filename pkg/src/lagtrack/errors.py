"""Exception types shared across the package."""


class LagtrackError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatchError(LagtrackError):
    """An input had the wrong shape or length."""


class RejectedInputError(LagtrackError):
    """An input violated a precondition (empty batch, out-of-range time, ...)."""


class TrainingDivergenceError(LagtrackError):
    """A loss or gradient became non-finite during training.

    ``batch_index`` is the index of the first offending transition within
    the batch, when it can be identified, else None.
    """

    def __init__(self, message: str, batch_index: int | None = None):
        super().__init__(message)
        self.batch_index = batch_index


class SingularInertiaError(LagtrackError):
    """The inertia matrix could not be factorized as positive definite."""


class SimulationBlowUpError(LagtrackError):
    """The integrated state became non-finite.

    ``step_index`` is the simulator substep at which the blow-up was detected.
    """

    def __init__(self, message: str, step_index: int | None = None):
        super().__init__(message)
        self.step_index = step_index


class GimbalProximityError(LagtrackError):
    """The pitch angle came too close to the Euler-rate singularity."""


class UnstableLeakageError(LagtrackError):
    """The compensator leakage rate is too large for the control period."""


class ConfigError(LagtrackError):
    """An experiment configuration failed validation.

    ``problems`` lists every validation failure found, not just the first.
    """

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = list(problems)
