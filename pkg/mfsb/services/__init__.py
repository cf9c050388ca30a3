"""
Services Package
Experiment orchestration layer over the core package
"""

from mfsb.services.ablation_service import AblationService
from mfsb.services.evaluation_service import EvaluationService
from mfsb.services.experiment_service import ExperimentService
from mfsb.services.export_service import export_service

__all__ = [
    "AblationService",
    "EvaluationService",
    "ExperimentService",
    "export_service",
]
