"""Exception types shared across the toolkit."""


class CegError(Exception):
    """Base class for all toolkit errors."""


class TreeParseError(CegError):
    """Raised for malformed tree/manipulation/variable/BN source text."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class ValidationError(CegError):
    """A structurally well-formed object violates a semantic invariant."""


class SumToOneError(ValidationError):
    pass


class BindingError(ValidationError):
    pass


class StageAssertionError(ValidationError):
    pass


class QueryError(CegError):
    """Unknown position, sink used as a position, or a foreign event."""


class ManipulationError(CegError):
    pass


class NotSimpleError(CegError):
    """A position set fails the active/background decomposition."""

    def __init__(self, reason: str, witness=None):
        super().__init__(reason if witness is None else f"{reason}: {witness}")
        self.reason = reason
        self.witness = witness


class CoverageError(CegError):
    """No regular position set induces the requested path event."""

    def __init__(self, reason: str, witness=None):
        super().__init__(reason if witness is None else f"{reason}: {witness}")
        self.reason = reason
        self.witness = witness


class IdentificationError(CegError):
    pass
