class MmwaveError(Exception):
    """Base class for every error raised by the simulator. The CLI maps
    `exit_code` straight onto the process exit status."""

    exit_code = 1


class ConfigError(MmwaveError, ValueError):
    exit_code = 2


class TrainingDivergedError(MmwaveError):
    exit_code = 3


class ArtifactMismatchError(MmwaveError):
    exit_code = 4


class EpisodeFinishedError(MmwaveError):
    """step() was called after the last slot of the trajectory."""


class DeepOutageError(MmwaveError):
    """No propagation path survived between a BS and the UE."""


class SlotBudgetError(MmwaveError, ValueError):
    """Beam training time exceeds the slot duration."""
