"""Exception types raised across the package."""


class MixAlignError(Exception):
    """Base class for all package-specific errors."""


class UnsupportedFormat(MixAlignError):
    """Audio container or encoding we do not decode."""


class CorruptFile(MixAlignError):
    """File exists but its contents are not parseable."""


class EmptyAudio(MixAlignError):
    """Decoded audio contains zero samples."""


class SchemaViolation(MixAlignError):
    """Manifest is missing required fields or has wrong types."""


class NonMonotonicBoundaries(MixAlignError):
    """Manifest boundaries are not strictly increasing."""


class InvalidParams(MixAlignError):
    """Operation parameters outside their documented domain."""


class TooShort(MixAlignError):
    """Input too short for the requested analysis."""


class EmptyInterval(MixAlignError):
    """A beat interval contains no feature frames."""


class MissingFeature(MixAlignError):
    """Requested feature matrix is absent from the input."""


class DegenerateInput(MixAlignError):
    """Input too small for the operation to be meaningful."""


class NoStableRun(MixAlignError):
    """Warping path has no diagonal run of the required length."""


class SpanTooShort(MixAlignError):
    """Cue span covers fewer beats than required."""


class LengthMismatch(MixAlignError):
    """Paired sequences have different lengths."""


class MissingAudio(MixAlignError):
    """A manifest entry has no usable audio file."""


class InvalidSpec(MixAlignError):
    """Synthesis spec violates its invariants."""
