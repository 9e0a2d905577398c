"""Exception types raised by the package."""


class DegenerateChainError(ValueError):
    """The behavior chain has no unique stationary distribution."""

    def __init__(self, message: str, states: tuple[int, ...] = ()):
        super().__init__(message)
        self.states = states


class AssumptionViolated(ValueError):
    """A standing modelling assumption (e.g. non-singular C) fails."""


class ConfigError(ValueError):
    """Experiment configuration does not match the expected schema."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class SchemaError(ValueError):
    """A CSV or JSON input lacks required columns or rows."""
