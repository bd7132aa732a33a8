"""Language-dependent adapters for a streaming multilingual Conformer transducer."""

from .config import RunConfig
from .errors import (CheckpointError, ConfigError, ContractError, DataError, DimensionError, LanguageRangeError,
                     LDAError, MergeError, TrainingError)
from .model import TransducerModel

__version__ = "0.1.0"

__all__ = [
    "CheckpointError", "ConfigError", "ContractError", "DataError", "DimensionError", "LDAError",
    "LanguageRangeError", "MergeError", "RunConfig", "TrainingError", "TransducerModel", "__version__",
]
