"""Exception types shared across the toolkit.

File-system problems (missing or unreadable paths) surface as the
builtin OSError family; everything toolkit-specific derives from
SkinBenchError.
"""


class SkinBenchError(Exception):
    """Base class for toolkit-specific failures."""


class DecodeError(SkinBenchError):
    """Image file exists but cannot be decoded."""


class DimensionMismatch(SkinBenchError):
    """Two rasters that must share dimensions do not."""


class EmptyTrainingSet(SkinBenchError):
    """Training produced zero usable pixels."""


class TooFewSamples(SkinBenchError):
    """Not enough samples to fit the requested model."""


class FormatError(SkinBenchError):
    """Model file is corrupt or not a model file at all."""


class VersionError(FormatError):
    """Model file was written by an incompatible format version."""


class MissingGroup(SkinBenchError):
    """Group-averaged evaluation hit an entry without a group id."""


class NoPositives(SkinBenchError):
    """Average precision needs at least one positive-labelled image."""


class IncompleteMatrix(SkinBenchError):
    """Rank comparison requires a score for every method/dataset cell."""


class EmptyEnsemble(SkinBenchError):
    """Vote fusion received no members with positive total weight."""


class MissingPrediction(SkinBenchError):
    """Evaluation found manifest images without prediction files."""


class ConfigError(SkinBenchError):
    """Ensemble configuration file failed to parse or validate."""
