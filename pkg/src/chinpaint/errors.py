"""Exception types raised by the library.

Every error a caller can act on has its own class so the CLI can map
input-side problems to exit code 2 without string matching.
"""

__all__ = [
    "ChinpaintError",
    "InvalidGridError",
    "ShapeMismatchError",
    "InvalidParameterError",
    "ConstraintViolationError",
    "InvalidMaskError",
    "InvalidInputError",
    "ImageFormatError",
    "ConfigParseError",
    "OracleFailure",
]


class ChinpaintError(Exception):
    """Base class for all library errors."""


class InvalidGridError(ChinpaintError):
    """Grid dimensions below the 2x2 minimum or otherwise unusable."""


class ShapeMismatchError(ChinpaintError):
    """Fields or images that do not live on the same grid."""


class InvalidParameterError(ChinpaintError):
    """A numeric parameter outside its admissible range."""


class ConstraintViolationError(ChinpaintError):
    """A field violates the obstacle constraint |u| <= 1 where it must hold."""


class InvalidMaskError(ChinpaintError):
    """Damage mask empty, all-damaged, or otherwise inadmissible."""


class InvalidInputError(ChinpaintError):
    """Input data fails a structural precondition (e.g. non-binary channel)."""


class ImageFormatError(ChinpaintError):
    """Unreadable or unsupported image file.

    Carries the byte offset at which parsing failed.
    """

    def __init__(self, message, offset=0):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class ConfigParseError(ChinpaintError):
    """Malformed configuration text.

    Carries the 1-based line number when the problem is tied to a line.
    """

    def __init__(self, message, line=None):
        if line is not None:
            super().__init__(f"line {line}: {message}")
        else:
            super().__init__(message)
        self.line = line


class OracleFailure(ChinpaintError):
    """The brute-force verifier found no consistent solution (assembly bug)."""
