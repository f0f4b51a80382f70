"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2,
MissingArtifactError -> 3, NumericError -> 4.
"""


class FlowAlignError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(FlowAlignError):
    """Invalid or unknown configuration key/value."""


class MissingArtifactError(FlowAlignError):
    """A required input artifact (dataset, cache, checkpoint) is absent."""


class NumericError(FlowAlignError):
    """A numeric failure: divergence, non-finite values, singular matrices."""


class SingularTimeError(NumericError):
    """Score conversion requested at a time where b(t) is below tolerance."""

    def __init__(self, t: float, b: float, tol: float):
        self.t = t
        self.b = b
        super().__init__(
            f"score is singular at t={t!r}: b(t)={b!r} is below tolerance {tol!r}"
        )


class TrainingDivergedError(NumericError):
    """Loss became non-finite during training."""

    def __init__(self, step: int, component: str, value: float):
        self.step = step
        self.component = component
        super().__init__(f"non-finite {component} ({value!r}) at step {step}")
