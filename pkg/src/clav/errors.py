"""Exception types shared across the toolkit."""


class ClavError(Exception):
    """Base class for all toolkit errors (maps to CLI exit code 2)."""


class IngestError(ClavError):
    """A source file or record could not be ingested."""


class NotFoundError(ClavError):
    """A document, paragraph, or artifact reference did not resolve."""


class ConfigError(ClavError):
    """A configuration value or configuration file is invalid."""


class FormatError(ClavError):
    """A binary or record file does not match its declared format."""


class UnembeddableError(ClavError):
    """No vector can be produced for the given input (e.g. all tokens OOV)."""
