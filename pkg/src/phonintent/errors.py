"""Exception hierarchy. The CLI maps ToolkitError to exit code 1."""


class ToolkitError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(ToolkitError):
    """A file does not conform to one of the on-disk formats."""


class DataError(ToolkitError):
    """A dataset or request violates a data-level precondition."""


class ShapeError(ToolkitError):
    """Array shapes are inconsistent with the model configuration."""


class TrainError(ToolkitError):
    """Training aborted (divergence, non-finite gradients, bad setup)."""
