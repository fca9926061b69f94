"""Exception types shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for all losstrace errors."""


class ShapeError(ToolkitError):
    """Dimension or length mismatch between arrays."""


class ConfigError(ToolkitError):
    """Invalid configuration value or model architecture."""


class ParseError(ToolkitError):
    """Malformed dataset file (bad cell, ragged row, bad header)."""


class NumericError(ToolkitError):
    """Non-finite value where a finite one is required."""


class MetricError(ToolkitError):
    """Evaluation metric undefined for the given inputs."""


class FilterError(ToolkitError):
    """Invalid filtering input, or a discard rule that keeps nothing."""


class TrainingError(ToolkitError):
    """Invalid training invocation (e.g. empty sample mask)."""
