"""Exception hierarchy.

Every domain failure derives from :class:`GazeError` so the CLI can map it to
exit code 1. Pipeline stage failures are distinct classes so per-stage drop
rates can be counted.
"""


class GazeError(Exception):
    """Base class for all domain errors."""


class MalformedInputError(GazeError, ValueError):
    pass


class BoundsError(GazeError, IndexError):
    pass


class DegenerateHistogramError(GazeError):
    """Binarization was asked to split a single-intensity image."""


class ShapeError(GazeError, ValueError):
    pass


class ArchError(GazeError, ValueError):
    pass


# cascade
class CascadeValidationError(GazeError):
    pass


class CascadeParseError(CascadeValidationError):
    def __init__(self, msg, offset=None):
        super().__init__(msg if offset is None else f"{msg} (at byte {offset})")
        self.offset = offset


class StageTrainingFailed(GazeError):
    pass


# pipeline
class FaceNotFound(GazeError):
    pass


class EyesNotFound(GazeError):
    pass


class PreprocessFailed(GazeError):
    pass


# dataset
class ManifestError(GazeError):
    def __init__(self, msg, line=None):
        super().__init__(msg if line is None else f"line {line}: {msg}")
        self.line = line


class SplitError(GazeError, ValueError):
    pass


# model files
class ModelFormatError(GazeError):
    """Bad magic or unsupported version."""


class ModelShapeError(GazeError):
    """Blob sizes disagree with the embedded architecture."""


class ModelValidationError(GazeError):
    """Non-finite parameter values."""


class DivergenceError(GazeError):
    pass
