"""Exception hierarchy shared by all voxframe modules."""


class VoxframeError(Exception):
    """Base class for every error raised by this package."""


class LoadError(VoxframeError):
    """A referenced file or manifest row could not be loaded."""


class FormatError(VoxframeError):
    """A file exists but is not in the expected binary/text format."""


class ParseError(VoxframeError):
    """A text file line could not be parsed."""


class AlignmentError(VoxframeError):
    """Phone segments overlap, are unsorted, or exceed the waveform."""


class TrialReferenceError(VoxframeError):
    """A trial references an utterance id missing from the corpus."""


class ShapeError(VoxframeError):
    """Array dimensions do not match the operation's contract."""


class NumericError(VoxframeError):
    """NaN/Inf encountered, or a linear system is irreparably singular."""


class ConfigError(VoxframeError):
    """A configuration violates one of its stated constraints."""


class TooShortError(VoxframeError):
    """Input has fewer frames/samples than the operation requires.

    ``min_frames`` carries the minimum the rejected operation needs.
    """

    def __init__(self, message, min_frames=None):
        super().__init__(message)
        self.min_frames = min_frames


class DegenerateInputError(VoxframeError):
    """A zero vector (or similar degenerate input) where direction matters."""


class MetricError(VoxframeError):
    """A score set cannot support the requested metric (e.g. single class)."""


class AnalysisError(VoxframeError):
    """An analysis precondition is violated (splits leak, too few classes...)."""


class EmptySegmentError(AnalysisError):
    """A phone segment covers no frame at the requested layer rate."""


class UnsupportedModeError(VoxframeError):
    """The operation is undefined for this network configuration."""
