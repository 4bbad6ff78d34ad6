"""Exception types shared across the package.

The CLI maps these onto distinct exit codes (config = 2, data = 3,
anything else = 4).
"""


class ConfigError(Exception):
    """Invalid or inconsistent run configuration."""


class DataError(Exception):
    """Problem with an input dataset, schema, or checkpoint file."""
