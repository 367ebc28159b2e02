"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array widths or shapes do not match what an operation requires."""


class NumericError(RuntimeError):
    """A value that must be finite is NaN or infinite (training blow-up)."""


class EmptyBufferError(RuntimeError):
    """Sampling was requested from a buffer that holds no transitions."""


class DatasetFormatError(ValueError):
    """A dataset file is malformed; carries the 1-based offending line."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(ValueError):
    """An experiment or fine-tune configuration is invalid."""


class MissingInputError(FileNotFoundError):
    """A required pipeline input (earlier stage output) is absent."""


class ConsistencyError(ValueError):
    """Two values that must agree (e.g. a cross-checked baseline) do not."""
