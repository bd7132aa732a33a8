"""Exception hierarchy shared by every module."""


class LDAError(Exception):
    """Base class for all package errors."""


class DimensionError(LDAError, ValueError):
    """Array shapes do not agree."""


class ContractError(LDAError, ValueError):
    """A precondition on the inputs of an operation was violated."""


class LanguageRangeError(LDAError, IndexError):
    """A language or token id lies outside its valid range."""


class ConfigError(LDAError, ValueError):
    """Invalid or inconsistent configuration."""


class DataError(LDAError, ValueError):
    """Malformed corpus or manifest on disk."""


class TrainingError(LDAError, FloatingPointError):
    """Non-finite values appeared during training."""

    def __init__(self, message, *, parameter=None, iteration=None):
        super().__init__(message)
        self.parameter = parameter
        self.iteration = iteration


class MergeError(LDAError):
    """Adapter merge refused (e.g. backbone fingerprints differ)."""


class CheckpointError(LDAError, OSError):
    """Base class for checkpoint load failures."""


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass
