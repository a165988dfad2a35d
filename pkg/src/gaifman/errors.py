class GaifmanError(Exception):
    """Base class for errors raised by this package."""


class DataError(GaifmanError, ValueError):
    """Malformed input data or a failed validation check."""


class ParseError(DataError):
    """Formula text that does not conform to the feature DSL."""

    def __init__(self, message, line=1, column=1):
        super().__init__(f"{message} (line {line}, column {column})")
        self.message = message
        self.line = line
        self.column = column


class TrainingDiverged(GaifmanError, FloatingPointError):
    """The loss or a parameter became non-finite during training."""
