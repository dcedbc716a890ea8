"""Exception types shared across the toolkit."""


class TrajriskError(Exception):
    """Base class for all toolkit errors."""


class DatasetParseError(TrajriskError):
    """Malformed dataset or map file content; message carries file:line."""


class FrameGapError(TrajriskError):
    """A track has non-contiguous frame indices."""


class MapReferenceError(TrajriskError):
    """A scene references a map_id that no MapSpec provides."""


class SplitError(TrajriskError):
    """Dataset cannot be split as requested."""


class ConfigError(TrajriskError):
    """Invalid configuration (world, model, or pipeline)."""


class TrainingError(TrajriskError):
    """Training cannot proceed (e.g. no example carries positive weight)."""


class NumericalError(TrajriskError):
    """Non-finite values encountered where finite ones are required."""


class MetricError(TrajriskError):
    """A metric's preconditions are not met."""


class DomainError(TrajriskError):
    """An argument lies outside the documented domain."""


class StructuralError(TrajriskError):
    """Two artifacts that must share a shape or key set do not."""
