"""Exception hierarchy shared across the package.

Everything user-facing derives from :class:`SummerError` so the CLI can map
it to a single-line ``ERROR:`` message and exit status 1; anything else that
escapes is an internal failure (exit status 2).
"""


class SummerError(Exception):
    """Base class for all errors raised on invalid input or API misuse."""


class DimensionError(SummerError):
    """Operand shapes are incompatible for the requested operation."""


class ParameterError(SummerError):
    """A hyperparameter or argument value violates its documented range."""


class ContractError(SummerError):
    """An API precondition was violated (wrong call order, wrong kind of input)."""


class ParseError(SummerError):
    """A data file could not be parsed."""


class ValidationError(SummerError):
    """Parsed data violates the configured dimensions or label vocabulary."""


class ConfigError(SummerError):
    """A configuration file or override is malformed or inconsistent."""
