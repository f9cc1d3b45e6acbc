"""Exception types shared across the package.

Plain precondition violations (bad shapes, out-of-bounds points) raise
ValueError; the classes here mark failures that callers, in particular the
CLI, need to tell apart.
"""


class TraceLocError(Exception):
    """Base class for package-specific errors."""


class ConfigError(TraceLocError):
    """Invalid or inconsistent run configuration (CLI exit code 2)."""


class DataIntegrityError(TraceLocError):
    """Corrupt, truncated, or mismatched on-disk artifacts (CLI exit code 3)."""


class TrainingDivergedError(TraceLocError):
    """Non-finite loss during optimization (CLI exit code 4)."""

    def __init__(self, message, stage=None, epoch=None, batch=None, losses=None):
        super().__init__(message)
        self.stage = stage
        self.epoch = epoch
        self.batch = batch
        self.losses = losses


class FitError(TraceLocError):
    """Radio-map regression could not be fitted (singular kernel system)."""
