"""Exception types raised across the package."""


class CunetError(Exception):
    """Base class for all package errors."""


class InvalidInput(CunetError):
    """An argument violates an operation's preconditions."""


class ShapeError(InvalidInput):
    """Tensor or spectrogram shapes are incompatible."""


class FormatError(CunetError):
    """A file is malformed or truncated."""


class UnsupportedFormat(FormatError):
    """A file is well-formed but uses an unsupported encoding."""


class SilentTarget(CunetError):
    """A reference signal is silent, so the requested ratio metric is undefined."""


class NoSilence(CunetError):
    """No silent frames exist, so energy-at-silence is undefined."""


class DegenerateReferences(CunetError):
    """Reference signals are linearly dependent; the projection is rank-deficient."""
