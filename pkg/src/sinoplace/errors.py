"""Exception hierarchy shared by every stage of the pipeline."""


class SinoplaceError(Exception):
    """Base class for all package errors."""


class FormatError(SinoplaceError, ValueError):
    """A file does not follow the expected on-disk format."""


class DimensionError(SinoplaceError, ValueError):
    """Array or file dimensions disagree with what was declared."""


class OrderError(SinoplaceError, ValueError):
    """Timestamps are duplicated or not strictly increasing."""


class RangeError(SinoplaceError, ValueError):
    """A query value lies outside the supported interval."""


class ParameterError(SinoplaceError, ValueError):
    """An argument is outside its valid domain."""


class CorruptionError(SinoplaceError, IOError):
    """A store file is truncated or otherwise damaged."""


class NoCandidateError(SinoplaceError, LookupError):
    """Retrieval was asked to choose from an empty candidate set."""
