class NextClickError(Exception):
    """Base class for toolkit errors."""


class ValidationError(NextClickError, ValueError):
    pass


class ConfigError(ValidationError):
    pass


class EmptyScreenError(ValidationError):
    pass


class HistoryOutOfOrderError(ValidationError):
    pass


class ShapeMismatchError(ValidationError):
    pass


class TargetMaskedError(ValidationError):
    pass


class TargetMissingError(ValidationError):
    pass


class EmptyInputError(ValidationError):
    pass


class TooFewUsersError(ValidationError):
    pass


class MissingCheckpointError(NextClickError, FileNotFoundError):
    pass


class CheckpointFormatError(NextClickError):
    pass


class DivergenceError(NextClickError, RuntimeError):
    pass


class IndexOutOfRangeError(ValidationError, IndexError):
    pass
