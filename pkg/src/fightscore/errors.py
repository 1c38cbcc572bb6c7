"""Exception hierarchy shared across the package."""


class FightScoreError(Exception):
    """Base class for all library errors."""


class ValidationError(FightScoreError):
    """A domain object violates one of its invariants."""


class FormatError(FightScoreError):
    """A file is not in the expected on-disk format (bad magic, bad schema)."""


class CorruptionError(FightScoreError):
    """A file has the right format markers but inconsistent content."""


class ConfigError(FightScoreError):
    """A run configuration is unusable (missing class, missing entry, bad path)."""


class TrainingError(FightScoreError):
    """Training cannot proceed (non-finite gradients, broken state)."""


class MetricError(FightScoreError):
    """A metric is undefined for the given inputs (e.g. single-class truth)."""
