"""Exception hierarchy shared across the converter."""


class ConverterError(Exception):
    """Base class for all converter errors."""


class ParseError(ConverterError):
    pass


class InvariantError(ConverterError):
    pass


class ConfigError(ConverterError):
    pass


class NetworkError(ConverterError):
    pass


class ProtocolError(ConverterError):
    """An OAI-PMH level failure. ``code`` carries the OAI error code when known."""

    def __init__(self, message: str, code: str | None = None):
        super().__init__(message)
        self.code = code


class XmlError(ConverterError):
    pass


class SchemaMismatch(ConverterError):
    pass


class UnknownSchema(ConverterError):
    pass


class UnknownTerm(ConverterError):
    pass


class InvalidBase(ConverterError):
    pass


class TooLarge(ConverterError):
    pass


class StateError(ConverterError, OSError):
    """Harvest state could not be read or written."""


class HarvestLocked(ConverterError):
    pass
