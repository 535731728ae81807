"""Exception types shared across the package.

The CLI maps these onto exit codes, so keep the taxonomy small:
config/usage problems, malformed data files, and numerical failures.
"""


class DimensionError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class DataFormatError(ValueError):
    """A dataset file does not match its declared binary format."""


class ConfigError(ValueError):
    """A run configuration is malformed or inconsistent."""


class NumericalError(RuntimeError):
    """A numerical routine diverged or failed to converge."""
