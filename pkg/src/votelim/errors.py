"""Exception hierarchy shared across the package."""


class VotelimError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(VotelimError):
    """Invalid model/experiment configuration (exit code 2 in the CLI)."""


class ResourceError(VotelimError):
    """A resource guard tripped, e.g. a lattice too large to enumerate (exit code 3)."""


class QuadratureError(VotelimError):
    """Numerical integration failed to stabilize within the node budget."""


class DataError(VotelimError):
    """Malformed or unusable input data."""


class UnsupportedMeasureError(VotelimError):
    """Operation not defined for this measure variant combination."""
