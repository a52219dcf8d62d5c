"""Exception types shared across the package."""


class PDEKDError(Exception):
    """Base class for all package errors."""


class FormatError(PDEKDError, ValueError):
    """A file could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(PDEKDError, ValueError):
    """Data violates a structural invariant (non-finite values, duplicates, shape mismatch)."""


class ConfigError(PDEKDError, ValueError):
    """Invalid or inconsistent configuration."""

    def __init__(self, message, key=None):
        self.key = key
        super().__init__(message)


class ModeError(PDEKDError, ValueError):
    """Operation requested in a mode the data does not support (e.g. grid op on scattered data)."""


class SolverError(PDEKDError, RuntimeError):
    """A numerical solver failed or did not converge."""

    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)
