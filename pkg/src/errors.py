"""
Exception hierarchy shared by all tubetrack modules.

Library code raises these; only the CLI converts them into messages and exit codes.
"""


class TubeTrackError(Exception):
    """Base class for every error raised on purpose by tubetrack."""


class VolumeFormatError(TubeTrackError):
    """A volume file is unreadable, malformed or uses an unsupported datatype."""


class ConfigError(TubeTrackError):
    """The pipeline configuration is invalid."""


class PhantomSpecError(TubeTrackError):
    """A phantom specification violates its geometric constraints."""


class CurveFormatError(TubeTrackError):
    """A curve CSV is missing, malformed or holds fewer than two points."""


class GraphError(TubeTrackError):
    """A graph query refers to unknown nodes or cannot be satisfied."""


class PipelineError(TubeTrackError):
    """A pipeline stage failed.

    Args:
        stage: Name of the failing stage (e.g. "supervoxels").
        message: Human readable description.
    """

    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
