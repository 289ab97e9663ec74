class WSCError(Exception):
    """Base class for errors raised by this package."""


class IngestionError(WSCError):
    pass


class FormatError(WSCError):
    pass


class ConfigurationError(WSCError, ValueError):
    pass


class DomainError(WSCError, ValueError):
    pass


class UsageError(WSCError, RuntimeError):
    pass


class ArchitectureParseError(WSCError, ValueError):
    def __init__(self, message, position=None):
        super().__init__(message if position is None else f"{message} (at position {position})")
        self.position = position
