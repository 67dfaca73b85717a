"""Error taxonomy shared across the package.

Two families matter to callers: problems with the data being processed
(DataError and its FormatError refinement) and problems with how the tools
were invoked or configured (ConfigError). The command line maps these to
distinct exit codes.
"""


class DataError(ValueError):
    """The input data is unusable (too short, empty, inconsistent labels...)."""


class FormatError(DataError):
    """A file does not parse as the format it claims to be."""


class ConfigError(ValueError):
    """A configuration value or combination of values is invalid."""
