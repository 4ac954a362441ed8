"""Exception hierarchy shared across the toolkit."""


class StegoError(Exception):
    """Base class for all toolkit errors."""


class PngDecodeError(StegoError, ValueError):
    """Input bytes are not a well-formed PNG."""


class UnsupportedFormatError(StegoError, ValueError):
    """PNG is valid but uses a layout we refuse (bit depth, palette, interlace)."""


class CapacityError(StegoError, ValueError):
    """Payload does not fit in the carrier."""


class CapacityTooSmallError(CapacityError):
    """No message length can reach the requested embedding rate."""


class PayloadAmbiguityError(StegoError, ValueError):
    """Payload would not parse back to its inputs (e.g. message holds a terminator)."""


class NotStegoFormatted(StegoError):
    """Carrier values cannot have been written by the app's embedder."""


class FitError(StegoError, ArithmeticError):
    """Linear system stayed singular after regularization retries."""
