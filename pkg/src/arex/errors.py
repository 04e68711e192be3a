"""Exception types shared across the package."""


class ArexError(Exception):
    """Base class for all package errors."""


class ShapeError(ArexError, ValueError):
    """Input dimension does not match what the operation expects."""


class CapabilityError(ArexError, TypeError):
    """A function used an operation the autodiff engine does not support."""


class NumericDivergenceError(ArexError, FloatingPointError):
    """Non-finite values appeared during optimization."""

    def __init__(self, message, iteration=None, dump=None):
        super().__init__(message if iteration is None else f"{message} (iteration {iteration})")
        self.iteration = iteration
        self.dump = dump


class IntegrityError(ArexError, ValueError):
    """A disclosed prediction disagrees with the model it claims to come from."""


class DegeneratePosteriorError(ArexError, ValueError):
    pass


class UninitializedSimulatorError(ArexError, RuntimeError):
    pass


class InvalidDomainError(ArexError, ValueError):
    pass


class ConstructionFailedError(ArexError, RuntimeError):
    pass


class NotInNonHarmfulSetError(ArexError, ValueError):
    pass


class ConfigError(ArexError, ValueError):
    pass


class ParseError(ArexError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class SchemaError(ArexError, ValueError):
    pass
