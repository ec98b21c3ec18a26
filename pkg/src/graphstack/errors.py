"""Exception types shared across the package."""


class GraphStackError(Exception):
    """Base class for all package errors."""


class ConfigError(GraphStackError, ValueError):
    """Invalid configuration value, unknown option, or bad combination."""


class ShapeError(GraphStackError, ValueError):
    """Operands whose dimensions do not line up."""


class DataError(GraphStackError, ValueError):
    """Invalid data values (non-finite entries, bad probability rows, ...)."""


class IntegrityError(GraphStackError, ValueError):
    """Cross-file or cross-structure inconsistency in a dataset."""


class FileParseError(GraphStackError, ValueError):
    """Malformed input file; carries the offending line number when known."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix = f"{path}: "
        if line is not None:
            prefix += f"line {line}: "
        super().__init__(prefix + message)


class SizeError(GraphStackError, ValueError):
    """Input exceeds a hard size guard (dense oracles are desk-scale only)."""


class NumericError(GraphStackError, ArithmeticError):
    """Numerical failure (factorization breakdown, singular system)."""


class PipelineError(GraphStackError, RuntimeError):
    """Failure inside a training pipeline; names the failing stage."""
