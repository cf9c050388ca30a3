"""
Models Package
Pydantic models for experiment configuration and reports
"""

from mfsb.models.config import ExperimentConfig, config_hash, format_config, parse_config, parse_config_text
from mfsb.models.report import (
    CurvePoint,
    EvalReport,
    LossBreakdown,
    ResultsRow,
    ResultsTable,
    TrainHistory,
)

__all__ = [
    # Config
    "ExperimentConfig",
    "config_hash",
    "format_config",
    "parse_config",
    "parse_config_text",
    # Reports
    "CurvePoint",
    "EvalReport",
    "LossBreakdown",
    "ResultsRow",
    "ResultsTable",
    "TrainHistory",
]
