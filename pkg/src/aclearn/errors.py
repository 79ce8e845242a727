"""Exception hierarchy shared by the library and the CLI."""


class ACError(Exception):
    """Base class for all aclearn errors."""


class DataError(ACError, ValueError):
    """Malformed or out-of-range input data (CLI exit code 2)."""


class ModelFormatError(DataError):
    """A saved model bundle could not be parsed or failed verification."""


class InvalidSplitError(ACError, ValueError):
    """A split violates the validity rules of the network."""


class ImpossibleEvidenceError(ACError, ValueError):
    """Conditioning evidence has probability zero under the model."""


class InternalError(ACError, RuntimeError):
    """An internal invariant was violated (CLI exit code 3)."""
