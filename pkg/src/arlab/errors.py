class ArlError(Exception):
    """Base class for errors raised by the package."""


class ContractError(ArlError, ValueError):
    """A precondition of an operation was violated (shapes, call order, bad state)."""


class DivergenceError(ArlError, FloatingPointError):
    """Training produced non-finite numbers."""

    def __init__(self, message, layer=None, iteration=None, episode=None):
        super().__init__(message)
        self.layer = layer
        self.iteration = iteration
        self.episode = episode

    def __str__(self):
        msg = super().__str__()
        where = [f"{k}={v}" for k, v in (("iteration", self.iteration), ("episode", self.episode)) if v is not None]
        return f"{msg} ({', '.join(where)})" if where else msg


class ConfigError(ArlError, ValueError):
    """Invalid configuration; ``field`` names the offending dotted path."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class MazeParseError(ArlError, ValueError):
    pass


class RaggedMazeError(MazeParseError):
    pass


class MissingCellError(MazeParseError):
    pass


class UnreachableGoalError(MazeParseError):
    pass


class InvalidStateError(ContractError):
    """An explicit reset state failed the environment's validity predicate."""
