"""Exception types shared across the engine."""


class CtpriorError(Exception):
    """Base class for engine errors."""


class ConfigurationError(CtpriorError):
    """A config value or argument is outside its documented domain."""


class ContractViolation(CtpriorError):
    """Caller broke an operation precondition (shape/index mismatch)."""


class EmptyPreWindowError(CtpriorError):
    """Normalization was asked to use fewer than two pre-window observations.

    Raised instead of falling back to degenerate (0, eps) statistics, which
    silently blows up normalized targets.
    """


class RecordFormatError(CtpriorError):
    """A serialized dataset is corrupt or truncated."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message if offset is None else f"{message} (at byte offset {offset})")
        self.offset = offset
