class InstrSearchError(Exception):
    """Base class for every error raised by this package."""


class TooFewPairs(InstrSearchError):
    pass


class CorruptFile(InstrSearchError):
    pass


class VersionMismatch(InstrSearchError):
    pass


class ChecksumMismatch(InstrSearchError):
    pass
