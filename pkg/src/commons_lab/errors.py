"""Exception types shared across the package."""


class CommonsLabError(Exception):
    pass


class ConfigError(CommonsLabError, ValueError):
    """Invalid configuration or map. CLI exit code 1."""


class UsageError(CommonsLabError, ValueError):
    """A call violated an operation's preconditions (bad shapes, lengths, ids)."""


class IntegrityError(CommonsLabError):
    """A log or checkpoint disagrees with re-simulation. CLI exit code 2."""


class IncompatibleCheckpointError(CommonsLabError):
    pass
