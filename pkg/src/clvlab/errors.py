"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: configuration problems exit with 2,
numerical failures with 3.
"""


class ClvlabError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(ClvlabError):
    """Invalid experiment configuration (schema or value range)."""


class NumericalError(ClvlabError):
    """A computation failed for numerical reasons (blowup, degeneracy, ...)."""
