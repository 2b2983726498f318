"""Exception types raised across the package."""


class TSAError(Exception):
    """Base class for all package errors."""


class EmptyClass(TSAError, ValueError):
    pass


class SingularCovariance(TSAError, ValueError):
    pass


class DimensionError(TSAError, ValueError):
    pass


class ParseError(TSAError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyDataset(TSAError, ValueError):
    pass


class UndefinedBias(TSAError, ValueError):
    pass


class EvalError(TSAError, ValueError):
    pass


class ConfigError(TSAError, ValueError):
    pass


class TrainingDiverged(TSAError, FloatingPointError):
    pass
