"""
Exception hierarchy shared by the services and the harness.

The CLI maps ConfigError to exit code 2 and RanlabRuntimeError to exit code 3.
"""
from typing import Optional


class RanlabError(Exception):
    """Base class for all laboratory errors."""


class ConfigError(RanlabError):
    """Invalid or unknown configuration value, located by dotted key."""

    def __init__(self, key: str, message: str):
        self.key = key
        self.message = message
        super().__init__(f"{key}: {message}")


class RanlabRuntimeError(RanlabError):
    """A run failed after its configuration was accepted."""


class TrainingDivergedError(RanlabRuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, stage: str, step: int, loss: Optional[float] = None):
        self.stage = stage
        self.step = step
        self.loss = loss
        super().__init__(
            f"{stage}: non-finite loss ({loss}) at step {step}; "
            f"lower the learning rate or check the inputs"
        )


class DimensionMismatchError(ValueError, RanlabError):
    """Array shapes do not match what the model expects."""


class PowerConstraintError(ValueError, RanlabError):
    """A beamformer exceeds its base station's power budget."""
