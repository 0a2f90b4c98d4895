"""Exception hierarchy shared by all codec layers."""


class BfacError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgument(BfacError, ValueError):
    pass


class FormatError(BfacError, ValueError):
    """A file or byte stream could not be parsed."""


class MalformedHeader(FormatError):
    pass


class TruncatedData(FormatError):
    pass


class UnsupportedFormat(FormatError):
    pass


class UnsupportedBitDepth(UnsupportedFormat):
    pass


class BadMagic(FormatError):
    pass


class VersionMismatch(FormatError):
    pass


class LengthOverrun(FormatError):
    pass


class DecodeError(FormatError):
    """Entropy-coded or block data is corrupt or ends early."""
