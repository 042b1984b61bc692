"""Exception types shared across the package."""


class ContractError(ValueError):
    """An input violates an operation's stated precondition."""


class SolverError(RuntimeError):
    """The optimization backend failed or returned an unusable status."""


class ConfigError(ValueError):
    """A run configuration is missing, malformed, or inconsistent."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field
