"""Exception types shared across the package."""


class RtmvError(Exception):
    """Base class for all package errors."""


class InvalidInputError(RtmvError):
    """Numerically or structurally invalid input (bad shapes, non-unit quaternion, ...)."""


class DegenerateInputError(RtmvError):
    """Input admits no unique solution (too few points, collinear cloud, ...)."""


class ManifestError(RtmvError):
    """Scene manifest failed validation. Carries every violation, not just the first."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class SamplingError(RtmvError):
    """Batch sampling constraints cannot be satisfied."""


class SplitError(RtmvError):
    """Evaluation split cannot be constructed for this scene."""


class ConfigError(RtmvError):
    """Invalid configuration value or combination."""


class AdapterStateError(RtmvError):
    """Adapter injection attempted on a model in the wrong state."""


class TrainingAbort(RtmvError):
    """Training stopped due to a non-finite loss; carries the offending batch id."""

    def __init__(self, message, batch_id=None):
        self.batch_id = batch_id
        super().__init__(message)
