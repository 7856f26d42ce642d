"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError (and
subclasses) -> 2, NumericError -> 3.
"""


class KeycapError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(KeycapError):
    """Tensor shapes are incompatible with the requested operation."""


class GraphError(KeycapError):
    """Misuse of the autodiff graph (non-scalar root, repeated backward)."""


class NumericError(KeycapError):
    """Non-finite values or other numeric failure during computation."""


class ConfigError(KeycapError):
    """Invalid configuration value, key, or command usage."""


class DataError(KeycapError):
    """Malformed dataset, vocabulary, or other input artifact."""


class CheckpointError(DataError):
    """Corrupt, truncated, or incompatible checkpoint file."""
