class GesccError(Exception):
    """Base class for package errors."""


class ParameterError(GesccError, ValueError):
    pass


class SchemaError(GesccError, ValueError):
    pass


class ValidationError(GesccError, ValueError):
    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class GapError(ValidationError):
    pass


class InfeasibleSpecError(GesccError, ValueError):
    """Chance-constraint data count too small for the inflation constants."""


class InfeasibleDispatchError(GesccError, RuntimeError):
    pass


class ConfigError(GesccError, ValueError):
    pass
