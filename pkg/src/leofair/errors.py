"""Exception types shared across the simulator."""


class LeofairError(Exception):
    """Base class for all simulator errors."""


class ConfigError(LeofairError, ValueError):
    """Invalid or unknown configuration."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DomainError(LeofairError, ValueError):
    """A numeric argument is outside the function's domain."""


class VisibilityError(LeofairError):
    """A link was requested for a satellite below the minimum elevation."""


class CoverageGapError(LeofairError):
    """A user has no visible satellite."""

    def __init__(self, user_id: int, detail: str = ""):
        self.user_id = user_id
        self.detail = detail
        msg = f"user {user_id} has no visible satellite"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class ClassificationError(LeofairError, ValueError):
    """A position lies outside every geographic category."""


class ConsistencyError(LeofairError):
    """Inputs refer to each other inconsistently (e.g. unknown user ids)."""


class OracleCapacityError(LeofairError):
    """The exhaustive oracle was asked to enumerate too many states."""


class QuotaUnfillableWarning(UserWarning):
    """A category with a positive quota has no users; its bandwidth stays idle."""
