"""Exception types shared across the package.

All of these derive from ValueError so callers can catch bad input uniformly;
the CLI maps them to exit code 2.
"""


class BartkitError(ValueError):
    """Base class for all bartkit validation failures."""


class SchemaError(BartkitError):
    """A required column, key, or field is missing or has the wrong kind."""


class ParseError(BartkitError):
    """A cell or document could not be parsed; message names the location."""


class EmptyInputError(BartkitError):
    """An input table or vector has no rows."""


class SerializationError(BartkitError):
    """A model artifact is malformed or has an unsupported schema version."""
