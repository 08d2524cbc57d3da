"""Exception hierarchy shared across the package.

Each class carries the CLI exit code it maps to.
"""


class StegoDetectError(Exception):
    exit_code = 1


class UsageError(StegoDetectError, ValueError):
    exit_code = 2


class ShapeError(UsageError):
    pass


class DataError(StegoDetectError, ValueError):
    exit_code = 3


class DecodeError(DataError):
    def __init__(self, position: int, message: str):
        super().__init__(f"position {position}: {message}")
        self.position = position


class NumericError(StegoDetectError, FloatingPointError):
    exit_code = 4


class CheckpointError(StegoDetectError):
    exit_code = 3


class FormatError(CheckpointError):
    pass


class ChecksumError(CheckpointError):
    pass


class VersionError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError, ShapeError):
    exit_code = 3


class StorageError(StegoDetectError, OSError):
    exit_code = 5
