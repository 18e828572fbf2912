"""Exception types shared across the library."""


class CvRadarError(Exception):
    """Base class for all library errors."""


class ShapeError(CvRadarError, ValueError):
    """An array does not have the shape an operation requires."""


class ConfigError(CvRadarError, ValueError):
    """A configuration object or file is invalid."""


class CubeFormatError(CvRadarError, ValueError):
    """A datacube byte stream is malformed (bad magic, truncation, overflow)."""


class ManifestError(CvRadarError, ValueError):
    """A dataset manifest is malformed or violates its invariants."""


class SplitError(CvRadarError, ValueError):
    """A train/test split cannot be formed as requested."""


class GraphError(CvRadarError, RuntimeError):
    """Autodiff graph misuse, e.g. backward before any forward pass."""


class ConfigMismatchError(CvRadarError, ValueError):
    """A weight file was produced under a different model configuration."""


class WeightsFormatError(CvRadarError, ValueError):
    """A weight file byte stream is malformed."""


class TrainingDivergedError(CvRadarError, RuntimeError):
    """Training produced a non-finite loss."""


class EvaluationError(CvRadarError, ValueError):
    """An evaluation request is inconsistent (empty set, mismatched models)."""
