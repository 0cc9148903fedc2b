"""Shared exception types for the defocr package."""


class DimensionError(ValueError):
    """Array shapes are inconsistent with the operation's contract."""


class ConfigError(ValueError):
    """A configuration value is invalid or mutually inconsistent."""


class RefusalError(ValueError):
    """Input is outside the supported domain (bad character, too long, too large)."""


class CheckpointError(Exception):
    """Base class for checkpoint persistence failures."""


class CorruptCheckpointError(CheckpointError):
    """Checkpoint bytes do not parse; the message names the failing field."""


class UnsupportedVersionError(CheckpointError):
    """Checkpoint format version is not readable by this build."""


class TrainingDiverged(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, batch_index: int, batch_seed: int):
        self.epoch = epoch
        self.batch_index = batch_index
        self.batch_seed = batch_seed
        super().__init__(
            f"non-finite loss at epoch {epoch}, batch {batch_index} "
            f"(batch seed {batch_seed})"
        )
