"""Exception hierarchy shared by all mcspoison modules."""


class McsPoisonError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(McsPoisonError, ValueError):
    """Input shape or length does not match what the operation requires."""


class IngestionError(McsPoisonError, ValueError):
    """A CSV row or column cannot be parsed into the worker-data schema."""


class PipelineError(McsPoisonError, ValueError):
    """Preprocessing step (imputation, balancing, splitting) cannot proceed."""


class ConfigError(McsPoisonError, ValueError):
    """Invalid or degenerate configuration."""


class TrainingError(McsPoisonError, RuntimeError):
    """Training failed, most commonly a non-finite loss (divergence)."""


class AttackError(McsPoisonError, ValueError):
    """Poison generation, injection, or a benchmark attack cannot proceed."""


class DefenseError(McsPoisonError, ValueError):
    """Outlier detection or filtering cannot proceed."""


class SelectionError(McsPoisonError, ValueError):
    """Worker scoring, group selection, or payment cannot proceed."""
