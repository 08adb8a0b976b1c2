"""Exception hierarchy shared by all modules."""


class JpegNoiseError(Exception):
    """Base class for all package errors."""


class DomainError(JpegNoiseError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ShapeError(JpegNoiseError, ValueError):
    """Plane dimensions are not compatible with the 8x8 block grid."""


class IntegrityError(JpegNoiseError, ValueError):
    """Data violates an invariant it is supposed to carry (e.g. lattice membership)."""


class ParseError(JpegNoiseError, ValueError):
    """Malformed or truncated file contents."""


class ConfigError(JpegNoiseError, ValueError):
    """Invalid configuration or degenerate calibration input."""
