"""Exception hierarchy shared by every module of the package."""


class Token2WaveError(Exception):
    """Base class for all package errors."""


class DimensionError(Token2WaveError, ValueError):
    """Array shapes are empty or do not line up."""


class ShapeError(DimensionError):
    """A matrix is not square or not symmetric where that is required."""


class ConsistencyError(Token2WaveError, ValueError):
    """A global semantics vector does not match the embeddings it came from."""


class DegenerateInputError(Token2WaveError, ValueError):
    """Input is valid in shape but carries too little information to proceed."""


class LookupIdError(Token2WaveError, IndexError):
    """A token id lies outside the embedding table."""


class LabelError(Token2WaveError, ValueError):
    """A class label lies outside ``[0, num_classes)``."""


class ParseError(Token2WaveError, ValueError):
    """A dataset file could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(Token2WaveError, ValueError):
    """A configuration is internally inconsistent."""


class DivergenceError(Token2WaveError, RuntimeError):
    """Training produced a non-finite loss."""


class PointRejectedError(Token2WaveError, ValueError):
    """A gradient-check point sits too close to a non-differentiable set."""
