"""Exception types raised across the pipeline."""


class SkeletonNetError(Exception):
    """Base class for all package errors."""


class ConfigError(SkeletonNetError, ValueError):
    pass


class ShapeError(SkeletonNetError, ValueError):
    pass


class DataError(SkeletonNetError):
    """Base for problems with input data on disk or in memory."""


class PairShapeError(DataError, ValueError):
    pass


class FormatError(DataError, ValueError):
    pass


class EmptyDatasetError(DataError, ValueError):
    pass


class InvalidTargetError(DataError, ValueError):
    pass


class NumericalError(SkeletonNetError, ArithmeticError):
    """Non-finite loss or activation. ``history`` holds any partial training record."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history
