"""Exception types shared across the package.

Plain ``ValueError`` is used for ordinary argument validation; the classes
here mark conditions callers may want to handle separately (and that the
CLI maps to distinct exit codes).
"""


class DegenerateInputError(ValueError):
    """Input is structurally valid but numerically degenerate (e.g. all-zero
    symbol frame passed to power normalization)."""


class TrainingDivergedError(RuntimeError):
    """Training loss became non-finite. Carries the 1-based epoch index."""

    def __init__(self, epoch: int, message: str | None = None):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}: loss is non-finite")


class IncompatibleCheckpointError(RuntimeError):
    """Checkpoint file is unreadable, truncated, or has an unsupported version."""


class DegenerateConstellationError(RuntimeError):
    """Transmitter output collapsed to (nearly) a single point; clustering is
    meaningless."""
