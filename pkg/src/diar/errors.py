"""Exception types shared across the package.

Validation-style failures (bad config, malformed inputs) derive from
ValidationError so the CLI can map them to exit code 1; everything else
is treated as a runtime failure (exit code 2).
"""


class ValidationError(ValueError):
    """Base class for errors caused by invalid user input or configuration."""


class ShapeError(ValidationError):
    """Operands have incompatible dimensions."""


class ConfigError(ValidationError):
    """A configuration value is missing, unknown, or inconsistent."""


class InputError(ValidationError):
    """A data input violates a precondition (too short, unknown id, ...)."""


class RttmParseError(ValidationError):
    """An RTTM line could not be parsed; carries the offending line number."""

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class CheckpointError(ValidationError):
    """Checkpoint file is malformed or incompatible with the model."""


class NumericsError(ArithmeticError):
    """A numeric computation produced non-finite values."""
