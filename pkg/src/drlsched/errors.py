"""Exception types shared across the package."""


class ParameterError(ValueError):
    """An invalid parameter value; ``field`` names the offending field."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class JobsetParseError(ValueError):
    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class ConfigError(ValueError):
    pass


class ActionError(IndexError):
    pass


class StateError(RuntimeError):
    pass


class NumericError(FloatingPointError):
    pass


class CheckpointError(ValueError):
    pass


class ShapeError(CheckpointError):
    pass


class InstanceTooLargeError(ValueError):
    pass
