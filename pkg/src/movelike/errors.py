"""Exception hierarchy.

Every error carries the process exit code the CLI maps it to:
2 for invalid input or configuration, 3 for processing failures,
4 for I/O failures.
"""


class MovelikeError(Exception):
    exit_code = 3


class InvalidInput(MovelikeError, ValueError):
    exit_code = 2


class InvalidConfig(InvalidInput):
    pass


class RectOutOfBounds(InvalidInput):
    pass


class SizeMismatch(InvalidInput):
    pass


class NonBinaryMask(InvalidInput):
    pass


class ImageTooSmall(InvalidInput):
    pass


class KeypointCountMismatch(InvalidInput):
    pass


class InvalidJob(InvalidInput):
    pass


class FrameSizeMismatch(InvalidJob):
    pass


class ObjectNotFound(MovelikeError):
    pass


class HoleCoversImage(MovelikeError):
    pass


class SingularJacobian(MovelikeError):
    pass


class TooManyColors(MovelikeError):
    pass


class IoError(MovelikeError, OSError):
    exit_code = 4
