"""Exception types shared across the package."""


class HippoError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(HippoError):
    """Tensor shape or axis mismatch."""


class ParameterError(HippoError):
    """Argument or hyperparameter outside its documented range."""


class NonFiniteError(HippoError):
    """A public operation produced NaN or Inf."""


class DataError(HippoError):
    """Malformed input data: files, records, sequences."""


class GraphError(HippoError):
    """Invalid graph structure or unknown node reference."""


class CheckpointError(HippoError):
    """Checkpoint I/O failure; ``code`` identifies the failure class."""

    def __init__(self, message: str, code: str):
        super().__init__(message)
        self.code = code
