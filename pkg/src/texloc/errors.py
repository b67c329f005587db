"""Exception hierarchy for texloc.

Every error raised on a contract violation derives from TexlocError so CLI
code can map families to exit codes in one place.
"""


class TexlocError(Exception):
    """Base class for all texloc errors."""


class ImageIoError(TexlocError):
    """Reading or writing an image file failed at the OS level."""


class UnsupportedFormatError(TexlocError):
    """The file exists but is not a supported 8-bit grayscale image."""


class OutOfWorldError(TexlocError):
    """A requested view footprint leaves the texture world extent."""


class DegenerateInputError(TexlocError):
    """Numerically degenerate input (e.g. rank-deficient projection fit)."""


class EmptyInputError(TexlocError):
    """An operation that requires at least one element got none."""


class EmptyIndexError(TexlocError):
    """Nearest-neighbour search against an index with no entries."""


class KindMismatchError(TexlocError):
    """Descriptor kinds (or bit widths) of two feature sets disagree."""


class VersionMismatchError(TexlocError):
    """A persisted file has an unknown magic or format version."""


class FingerprintMismatchError(TexlocError):
    """A persisted map was built under a different parameter fingerprint."""


class ConfigMismatchError(TexlocError):
    """A map and the session configuration are incompatible."""


class MapEmptyError(TexlocError):
    """Localization attempted against a map with no features."""


class EmptyHistogramError(TexlocError):
    """Peak search on a vote histogram without any votes."""


class TooFewMatchesError(TexlocError):
    """Pose estimation needs at least two matches."""


class EmptyRecordsError(TexlocError):
    """Model-input estimation needs non-empty evaluation record lists."""


class DomainError(TexlocError):
    """A probability-law parameter is outside its domain."""
