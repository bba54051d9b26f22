"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration value or unusable input file."""


class DomainError(ValueError):
    """An argument lies outside the domain an operation is defined on."""


class ContractError(ValueError):
    """A caller broke an operation's precondition."""


class DataIntegrityError(RuntimeError):
    """Recorded data violates an internal identity (e.g. negative time residual)."""
