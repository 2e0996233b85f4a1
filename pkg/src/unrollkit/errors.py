"""Exception hierarchy shared by every module."""


class UnrollError(Exception):
    """Base class for all errors raised by unrollkit."""


class ShapeError(UnrollError, ValueError):
    """Operand dimensions do not agree."""


class ContractError(UnrollError, ValueError):
    """A precondition on an argument was violated."""


class NumericError(UnrollError, ArithmeticError):
    """An iterative method failed or produced non-finite values."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DegenerateInputError(NumericError):
    """Input is degenerate for the requested computation (e.g. zero matrix)."""


class TrainingError(NumericError):
    """Training diverged."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class ContainerError(UnrollError, ValueError):
    """Malformed URK1 container."""


class ConfigError(UnrollError, ValueError):
    """Malformed configuration text."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
