"""Exception hierarchy shared by all styletx modules.

Each subtree maps to one CLI exit code so batch wrappers can tell apart
config mistakes, broken inputs, contract violations, and numeric blowups.
"""


class StyleTxError(Exception):
    """Base class for all styletx errors."""

    exit_code = 1


class ConfigError(StyleTxError):
    """Malformed or inconsistent shot configuration."""

    exit_code = 2


class InputOutputError(StyleTxError):
    """File system or codec failure."""

    exit_code = 3


class MissingFileError(InputOutputError):
    """A referenced input file does not exist."""


class UnsupportedFormatError(InputOutputError):
    """The file exists but is not a format this tool handles."""


class CorruptDataError(InputOutputError):
    """The file exists and looks like a known format but cannot be decoded."""


class ValidationError(StyleTxError):
    """A domain invariant or precondition was violated."""

    exit_code = 4


class UnmappedColorError(ValidationError):
    """A color ID present in an ID pass has no palette entry."""


class NumericError(StyleTxError):
    """A computation produced non-finite or otherwise unusable values."""

    exit_code = 5
