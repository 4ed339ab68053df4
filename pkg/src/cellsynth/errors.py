"""Shared exception types."""


class ConfigurationError(ValueError):
    """Invalid configuration values or ranges."""


class ShapeError(ValueError):
    """Array shape mismatch or indivisible image side."""


class SizeError(ValueError):
    """A requested count exceeds what the input can provide."""
