"""Exception hierarchy. The CLI maps these onto exit codes."""


class ConstyleError(Exception):
    """Base class for package errors."""


class DataError(ConstyleError, ValueError):
    """Bad or missing input data (files, manifests, image shapes)."""


class ImageFormatError(DataError):
    """Unreadable, truncated or unsupported raster file."""


class ConfigError(ConstyleError, ValueError):
    """Malformed configuration or parameter ranges."""


class NumericalError(ConstyleError, ArithmeticError):
    """A non-finite value appeared where the computation requires finite values."""
