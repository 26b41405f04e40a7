"""Exception types raised across the package."""


class BnbTransferError(Exception):
    """Base class for all package errors."""


class InvalidScenario(BnbTransferError, ValueError):
    pass


class DimensionError(BnbTransferError, ValueError):
    pass


class InvalidFixings(BnbTransferError, ValueError):
    pass


class NoIncumbentError(BnbTransferError):
    """A search finished without any feasible integer solution."""


class NotSolvedError(BnbTransferError):
    pass


class NumericalError(BnbTransferError, ArithmeticError):
    pass


class EmptyDatasetError(BnbTransferError, ValueError):
    pass


class IterationStarved(BnbTransferError):
    """Every collection episode of a self-imitation round was discarded."""


class ConfigError(BnbTransferError, ValueError):
    pass


class ParseError(BnbTransferError, ValueError):
    """Corrupt or truncated file. ``offset`` is the byte position of the fault."""

    def __init__(self, message, offset=None):
        super().__init__(message if offset is None else f"{message} (byte offset {offset})")
        self.offset = offset


class VersionError(BnbTransferError, ValueError):
    pass


class EmptyReportError(BnbTransferError, ValueError):
    pass
