"""Exception types shared across the package."""


class MixmodalError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(MixmodalError):
    """Invalid configuration value or an operation forbidden by the configuration."""


class GeometryError(MixmodalError):
    """Image dimensions incompatible with the patch/pyramid geometry."""


class ValidationError(MixmodalError):
    """A record or tensor violates a documented invariant."""


class ParseError(MixmodalError):
    """Malformed on-disk artifact (manifest line, vocab file, checkpoint)."""


class ModeError(MixmodalError):
    """Operation not available in the configured fusion mode."""


class ShapeError(MixmodalError):
    """Tensor shapes or mask lengths do not line up."""
