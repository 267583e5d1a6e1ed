"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Raised for malformed configuration files, unknown keys, or bad values."""


class DivergenceError(RuntimeError):
    """Raised when a forward integration exceeds the divergence bound.

    Carries enough context to point at the offending sample and step.
    """

    def __init__(self, message: str, sample: int | None = None, step: int | None = None):
        super().__init__(message)
        self.sample = sample
        self.step = step


class DataFormatError(ValueError):
    """Raised for malformed data files (IDX images/labels, CSV datasets)."""


class CheckpointError(RuntimeError):
    """Raised when a checkpoint cannot be loaded or fails its config check."""
