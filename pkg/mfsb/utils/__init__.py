"""
Utility modules for the package
"""

from mfsb.utils.logger import app_logger, log_epoch, log_error, log_run, log_training_step
from mfsb.utils.seeding import stream_rng, stream_seed
from mfsb.utils.errors import (
    AppException,
    CheckpointError,
    ConfigError,
    ContractError,
    DegenerateInputError,
    DeterminismError,
    EmptyContextError,
    ExperimentError,
    MetricError,
    NumericError,
    ShapeError,
    SplitError,
    TapeError,
    TargetIndexError,
    VocabularyError,
    is_config_error,
)

__all__ = [
    # Logger
    "app_logger",
    "log_epoch",
    "log_error",
    "log_run",
    "log_training_step",
    # Seeding
    "stream_rng",
    "stream_seed",
    # Errors
    "AppException",
    "CheckpointError",
    "ConfigError",
    "ContractError",
    "DegenerateInputError",
    "DeterminismError",
    "EmptyContextError",
    "ExperimentError",
    "MetricError",
    "NumericError",
    "ShapeError",
    "SplitError",
    "TapeError",
    "TargetIndexError",
    "VocabularyError",
    "is_config_error",
]
