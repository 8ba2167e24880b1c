"""Exception hierarchy. The CLI maps these to distinct exit codes."""


class DrnnError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(DrnnError):
    """Incompatible array shapes; message names both operands."""

    def __init__(self, message, left_shape=None, right_shape=None):
        super().__init__(message)
        self.left_shape = left_shape
        self.right_shape = right_shape


class ConfigError(DrnnError):
    """Invalid configuration value, flag, or model/checkpoint mismatch."""


class DataError(DrnnError):
    """Invalid dataset, manifest, sequence file, or label."""


class NumericError(DrnnError):
    """Non-finite value encountered during compute; carries context."""
