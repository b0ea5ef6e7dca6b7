"""Error categories surfaced by the library and mapped to CLI exit codes."""


class StreamHashError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(StreamHashError):
    """A file does not follow its declared on-disk format."""


class ConsistencyError(StreamHashError):
    """Companion inputs disagree (e.g. image/label counts differ)."""


class DomainError(StreamHashError):
    """A value lies outside the documented domain of an operation."""


class DimensionError(StreamHashError):
    """Matrix/code shapes do not agree."""


class SplitError(StreamHashError):
    """A dataset split cannot be realized as requested."""


class DegenerateDistributionError(StreamHashError):
    """A pair distribution would have zero total mass."""


class NumericError(StreamHashError):
    """A non-finite value appeared where finite numbers are required."""


class ConfigError(StreamHashError):
    """An experiment configuration failed validation."""
